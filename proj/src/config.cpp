#include "samcl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "samcl/errors.hpp"

namespace samcl::config {

using nlohmann::json;

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.synthetic.num_subjects = 25;

  // training-time augmentation: horizontal flip always available; occluders
  // and noise activate only in the tiaug modes
  auto& aug = cfg.train.aug;
  aug.hflip_enabled = true;
  aug.vflip_enabled = false;
  aug.rotation_enabled = false;
  aug.blur_enabled = false;
  aug.resize_enabled = false;
  aug.count_min = 1;
  aug.count_max = 3;
  aug.size_min = 0.08;
  aug.size_max = 0.30;
  aug.hot_offset_min = 5.0;
  aug.hot_offset_max = 15.0;
  aug.cold_offset_min = 5.0;
  aug.cold_offset_max = 15.0;
  aug.edge_softness_min = 0.0;
  aug.edge_softness_max = 2.0;

  // occluded-validation variant: a harder, fixed-seed occlusion battery
  auto& ev = cfg.train.eval_aug;
  ev.hflip_enabled = false;
  ev.vflip_enabled = false;
  ev.rotation_enabled = false;
  ev.blur_enabled = false;
  ev.resize_enabled = false;
  ev.count_min = 2;
  ev.count_max = 4;
  ev.size_min = 0.10;
  ev.size_max = 0.35;
  ev.hot_offset_min = 5.0;
  ev.hot_offset_max = 15.0;
  ev.cold_offset_min = 5.0;
  ev.cold_offset_max = 15.0;
  ev.edge_softness_min = 0.0;
  ev.edge_softness_max = 2.0;

  cfg.ablate_modes = {train::LossMode::kRmi, train::LossMode::kRmiTiaug,
                      train::LossMode::kRmiTiaugSamcl};
  cfg.ablate_seeds = {1, 2, 3};
  return cfg;
}

namespace {

// Strict section reader: every present key must be known and well-typed.
class Section {
 public:
  Section(const json& doc, std::string pointer) : pointer_(std::move(pointer)) {
    if (!doc.is_object()) throw ConfigError(pointer_, "expected an object");
    obj_ = &doc;
  }

  void read_int(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(ptr(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void read_u64(const char* key, uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned() && !v->is_number_integer())
        throw ConfigError(ptr(key), "expected an unsigned integer");
      out = v->get<uint64_t>();
    }
  }
  void read_double(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(ptr(key), "expected a number");
      out = v->get<double>();
    }
  }
  void read_bool(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(ptr(key), "expected a boolean");
      out = v->get<bool>();
    }
  }
  void read_string(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ConfigError(ptr(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void read_double_list(const char* key, std::vector<double>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw ConfigError(ptr(key), "expected an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError(ptr(key), "expected an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void read_u64_list(const char* key, std::vector<uint64_t>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw ConfigError(ptr(key), "expected an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer() && !e.is_number_unsigned())
          throw ConfigError(ptr(key), "expected an array of integers");
        out.push_back(e.get<uint64_t>());
      }
    }
  }
  void read_string_list(const char* key, std::vector<std::string>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw ConfigError(ptr(key), "expected an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) throw ConfigError(ptr(key), "expected an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }

  std::string ptr(const char* key) const { return pointer_ + "/" + key; }

  void finish() const {
    for (auto it = obj_->begin(); it != obj_->end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(pointer_ + "/" + it.key(), "unknown key");
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    auto it = obj_->find(key);
    return it == obj_->end() ? nullptr : &*it;
  }
  const json* obj_ = nullptr;
  std::string pointer_;
  std::set<std::string> seen_;
};

void parse_aug(const json& doc, const std::string& pointer, tiaug::AugConfig& aug) {
  Section s(doc, pointer);
  s.read_bool("occluders_enabled", aug.occluders_enabled);
  s.read_int("count_min", aug.count_min);
  s.read_int("count_max", aug.count_max);
  s.read_double("size_min", aug.size_min);
  s.read_double("size_max", aug.size_max);
  s.read_bool("hot_enabled", aug.hot_enabled);
  s.read_bool("cold_enabled", aug.cold_enabled);
  s.read_double("hot_offset_min", aug.hot_offset_min);
  s.read_double("hot_offset_max", aug.hot_offset_max);
  s.read_double("cold_offset_min", aug.cold_offset_min);
  s.read_double("cold_offset_max", aug.cold_offset_max);
  s.read_double("edge_softness_min", aug.edge_softness_min);
  s.read_double("edge_softness_max", aug.edge_softness_max);
  s.read_bool("noise_enabled", aug.noise_enabled);
  s.read_double("netd_max", aug.netd_max);
  s.read_bool("hflip_enabled", aug.hflip_enabled);
  s.read_bool("vflip_enabled", aug.vflip_enabled);
  s.read_bool("rotation_enabled", aug.rotation_enabled);
  s.read_double("rotation_max_deg", aug.rotation_max_deg);
  s.read_bool("blur_enabled", aug.blur_enabled);
  s.read_double("blur_sigma_min", aug.blur_sigma_min);
  s.read_double("blur_sigma_max", aug.blur_sigma_max);
  s.read_bool("resize_enabled", aug.resize_enabled);
  s.read_double("resize_min", aug.resize_min);
  s.read_double("resize_max", aug.resize_max);
  s.finish();
  try {
    aug.validate();
  } catch (const ContractError& e) {
    throw ConfigError(pointer, e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("/", "expected a JSON object");

  RunConfig cfg = default_run_config();
  const std::set<std::string> known_sections = {"synthetic", "data",  "aug",       "eval_aug",
                                                "loss",      "net",   "train",     "histogram",
                                                "ablate"};
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!known_sections.count(it.key())) throw ConfigError("/" + it.key(), "unknown section");

  if (doc.contains("synthetic")) {
    Section s(doc["synthetic"], "/synthetic");
    s.read_int("height", cfg.synthetic.height);
    s.read_int("width", cfg.synthetic.width);
    s.read_double("bg_temp_min", cfg.synthetic.bg_temp_min);
    s.read_double("bg_temp_max", cfg.synthetic.bg_temp_max);
    s.read_double("face_temp_min", cfg.synthetic.face_temp_min);
    s.read_double("face_temp_max", cfg.synthetic.face_temp_max);
    s.read_double("chin_offset", cfg.synthetic.chin_offset);
    s.read_double("mouth_offset", cfg.synthetic.mouth_offset);
    s.read_double("nose_offset", cfg.synthetic.nose_offset);
    s.read_double("eye_offset", cfg.synthetic.eye_offset);
    s.read_double("brow_offset", cfg.synthetic.brow_offset);
    s.read_double("geometry_jitter", cfg.synthetic.geometry_jitter);
    s.read_int("num_subjects", cfg.synthetic.num_subjects);
    s.read_int("frames_per_subject", cfg.frames_per_subject);
    s.finish();
    try {
      cfg.synthetic.validate();
    } catch (const ContractError& e) {
      throw ConfigError("/synthetic", e.what());
    }
    if (cfg.frames_per_subject < 1)
      throw ConfigError("/synthetic/frames_per_subject", "must be >= 1");
  }

  if (doc.contains("data")) {
    Section s(doc["data"], "/data");
    s.read_string("source", cfg.data_source);
    s.read_string("manifest", cfg.manifest_path);
    s.read_int("train_subjects", cfg.train_subjects);
    s.read_int("val_subjects", cfg.val_subjects);
    s.read_double("train_fraction", cfg.train_fraction);
    s.read_u64("data_seed", cfg.data_seed);
    s.finish();
    if (cfg.data_source != "synthetic" && cfg.data_source != "manifest")
      throw ConfigError("/data/source", "must be 'synthetic' or 'manifest'");
    if (cfg.data_source == "manifest" && cfg.manifest_path.empty())
      throw ConfigError("/data/manifest", "required when source is 'manifest'");
    if (cfg.train_subjects < 1) throw ConfigError("/data/train_subjects", "must be >= 1");
    if (cfg.val_subjects < 1) throw ConfigError("/data/val_subjects", "must be >= 1");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
      throw ConfigError("/data/train_fraction", "must be in (0, 1)");
  }

  if (doc.contains("aug")) parse_aug(doc["aug"], "/aug", cfg.train.aug);
  if (doc.contains("eval_aug")) parse_aug(doc["eval_aug"], "/eval_aug", cfg.train.eval_aug);

  if (doc.contains("loss")) {
    Section s(doc["loss"], "/loss");
    auto& lc = cfg.train.loss_cfg;
    s.read_double("margin", lc.margin);
    s.read_int("rmi_side", lc.rmi_side);
    s.read_int("rmi_downsample", lc.rmi_downsample);
    s.read_double("rmi_epsilon", lc.rmi_epsilon);
    s.read_double("lambda_ce", lc.lambda_ce);
    s.read_double("lambda_mi", lc.lambda_mi);
    s.finish();
    try {
      lc.validate();
    } catch (const ContractError& e) {
      throw ConfigError("/loss", e.what());
    }
  }

  if (doc.contains("net")) {
    Section s(doc["net"], "/net");
    auto& net = cfg.train.net;
    s.read_int("depth", net.depth);
    s.read_int("base_channels", net.base_channels);
    s.read_int("num_classes", net.num_classes);
    s.read_int("input_channels", net.input_channels);
    s.finish();
    try {
      net.validate();
    } catch (const ContractError& e) {
      throw ConfigError("/net", e.what());
    }
  }

  if (doc.contains("train")) {
    Section s(doc["train"], "/train");
    auto& t = cfg.train;
    std::string mode = train::loss_mode_name(t.loss_mode);
    s.read_int("batch_size", t.batch_size);
    s.read_double("learning_rate", t.learning_rate);
    s.read_int("epochs", t.epochs);
    s.read_string("loss_mode", mode);
    s.read_double("lambda_samcl", t.lambda_samcl);
    s.read_u64("seed", t.seed);
    s.read_int("aug_workers", t.aug_workers);
    s.read_double("weight_decay", t.optimizer.weight_decay);
    s.read_double("beta1", t.optimizer.beta1);
    s.read_double("beta2", t.optimizer.beta2);
    s.read_bool("plain_sgd", t.optimizer.plain_sgd);
    s.read_double_list("bce_class_weights", t.bce_class_weights);
    s.read_u64("eval_aug_seed", t.eval_aug_seed);
    s.finish();
    try {
      t.loss_mode = train::loss_mode_from_name(mode);
    } catch (const ContractError& e) {
      throw ConfigError("/train/loss_mode", e.what());
    }
    if (t.batch_size < 1) throw ConfigError("/train/batch_size", "must be >= 1");
    if (t.epochs < 1) throw ConfigError("/train/epochs", "must be >= 1");
    if (!(t.learning_rate > 0.0)) throw ConfigError("/train/learning_rate", "must be > 0");
    if (t.aug_workers < 1) throw ConfigError("/train/aug_workers", "must be >= 1");
  }

  if (doc.contains("histogram")) {
    Section s(doc["histogram"], "/histogram");
    s.read_int("bins", cfg.histogram_bins);
    s.read_double("lo", cfg.histogram_lo);
    s.read_double("hi", cfg.histogram_hi);
    s.finish();
    if (cfg.histogram_bins < 1) throw ConfigError("/histogram/bins", "must be >= 1");
    if (!(cfg.histogram_hi > cfg.histogram_lo))
      throw ConfigError("/histogram/hi", "must exceed /histogram/lo");
  }

  if (doc.contains("ablate")) {
    Section s(doc["ablate"], "/ablate");
    std::vector<std::string> modes;
    s.read_string_list("modes", modes);
    s.read_u64_list("seeds", cfg.ablate_seeds);
    s.finish();
    if (!modes.empty()) {
      cfg.ablate_modes.clear();
      for (const auto& m : modes) {
        try {
          cfg.ablate_modes.push_back(train::loss_mode_from_name(m));
        } catch (const ContractError& e) {
          throw ConfigError("/ablate/modes", e.what());
        }
      }
    }
    if (cfg.ablate_modes.size() < 2) throw ConfigError("/ablate/modes", "need >= 2 modes");
    if (cfg.ablate_seeds.empty()) throw ConfigError("/ablate/seeds", "need >= 1 seed");
  }

  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("/", "cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_run_config(buf.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  auto aug_json = [](const tiaug::AugConfig& a) {
    return json{{"occluders_enabled", a.occluders_enabled},
                {"count_min", a.count_min},
                {"count_max", a.count_max},
                {"size_min", a.size_min},
                {"size_max", a.size_max},
                {"hot_enabled", a.hot_enabled},
                {"cold_enabled", a.cold_enabled},
                {"hot_offset_min", a.hot_offset_min},
                {"hot_offset_max", a.hot_offset_max},
                {"cold_offset_min", a.cold_offset_min},
                {"cold_offset_max", a.cold_offset_max},
                {"edge_softness_min", a.edge_softness_min},
                {"edge_softness_max", a.edge_softness_max},
                {"noise_enabled", a.noise_enabled},
                {"netd_max", a.netd_max},
                {"hflip_enabled", a.hflip_enabled},
                {"vflip_enabled", a.vflip_enabled},
                {"rotation_enabled", a.rotation_enabled},
                {"rotation_max_deg", a.rotation_max_deg},
                {"blur_enabled", a.blur_enabled},
                {"blur_sigma_min", a.blur_sigma_min},
                {"blur_sigma_max", a.blur_sigma_max},
                {"resize_enabled", a.resize_enabled},
                {"resize_min", a.resize_min},
                {"resize_max", a.resize_max}};
  };
  json doc;
  doc["synthetic"] = {{"height", cfg.synthetic.height},
                      {"width", cfg.synthetic.width},
                      {"bg_temp_min", cfg.synthetic.bg_temp_min},
                      {"bg_temp_max", cfg.synthetic.bg_temp_max},
                      {"face_temp_min", cfg.synthetic.face_temp_min},
                      {"face_temp_max", cfg.synthetic.face_temp_max},
                      {"chin_offset", cfg.synthetic.chin_offset},
                      {"mouth_offset", cfg.synthetic.mouth_offset},
                      {"nose_offset", cfg.synthetic.nose_offset},
                      {"eye_offset", cfg.synthetic.eye_offset},
                      {"brow_offset", cfg.synthetic.brow_offset},
                      {"geometry_jitter", cfg.synthetic.geometry_jitter},
                      {"num_subjects", cfg.synthetic.num_subjects},
                      {"frames_per_subject", cfg.frames_per_subject}};
  doc["data"] = {{"source", cfg.data_source},
                 {"manifest", cfg.manifest_path},
                 {"train_subjects", cfg.train_subjects},
                 {"val_subjects", cfg.val_subjects},
                 {"train_fraction", cfg.train_fraction},
                 {"data_seed", cfg.data_seed}};
  doc["aug"] = aug_json(cfg.train.aug);
  doc["eval_aug"] = aug_json(cfg.train.eval_aug);
  doc["loss"] = {{"margin", cfg.train.loss_cfg.margin},
                 {"rmi_side", cfg.train.loss_cfg.rmi_side},
                 {"rmi_downsample", cfg.train.loss_cfg.rmi_downsample},
                 {"rmi_epsilon", cfg.train.loss_cfg.rmi_epsilon},
                 {"lambda_ce", cfg.train.loss_cfg.lambda_ce},
                 {"lambda_mi", cfg.train.loss_cfg.lambda_mi}};
  doc["net"] = {{"depth", cfg.train.net.depth},
                {"base_channels", cfg.train.net.base_channels},
                {"num_classes", cfg.train.net.num_classes},
                {"input_channels", cfg.train.net.input_channels}};
  doc["train"] = {{"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate},
                  {"epochs", cfg.train.epochs},
                  {"loss_mode", train::loss_mode_name(cfg.train.loss_mode)},
                  {"lambda_samcl", cfg.train.lambda_samcl},
                  {"seed", cfg.train.seed},
                  {"aug_workers", cfg.train.aug_workers},
                  {"weight_decay", cfg.train.optimizer.weight_decay},
                  {"beta1", cfg.train.optimizer.beta1},
                  {"beta2", cfg.train.optimizer.beta2},
                  {"plain_sgd", cfg.train.optimizer.plain_sgd},
                  {"bce_class_weights", cfg.train.bce_class_weights},
                  {"eval_aug_seed", cfg.train.eval_aug_seed}};
  doc["histogram"] = {{"bins", cfg.histogram_bins},
                      {"lo", cfg.histogram_lo},
                      {"hi", cfg.histogram_hi}};
  json modes = json::array();
  for (auto m : cfg.ablate_modes) modes.push_back(train::loss_mode_name(m));
  doc["ablate"] = {{"modes", modes}, {"seeds", cfg.ablate_seeds}};
  return doc.dump(2);
}

train::TrainData build_dataset(const RunConfig& cfg) {
  train::TrainData data;
  if (cfg.data_source == "synthetic") {
    cfg.synthetic.validate();
    const int total_subjects = cfg.train_subjects + cfg.val_subjects;
    for (int subj = 0; subj < total_subjects; ++subj) {
      Rng subj_rng(mix_seed(cfg.data_seed, {7, static_cast<uint64_t>(subj)}));
      const data::SubjectParams sp = data::sample_subject(cfg.synthetic, subj_rng);
      for (int frame = 0; frame < cfg.frames_per_subject; ++frame) {
        Rng frame_rng(
            mix_seed(cfg.data_seed, {8, static_cast<uint64_t>(subj), static_cast<uint64_t>(frame)}));
        auto [img, mask] = data::synth_face_frame(cfg.synthetic, sp, frame_rng);
        if (subj < cfg.train_subjects) {
          data.train_images.push_back(std::move(img));
          data.train_masks.push_back(std::move(mask));
        } else {
          data.val_images.push_back(std::move(img));
          data.val_masks.push_back(std::move(mask));
        }
      }
    }
    return data;
  }
  // manifest source
  data::DatasetIndex index = data::load_manifest(cfg.manifest_path);
  Rng split_rng(mix_seed(cfg.data_seed, {9}));
  auto [train_idx, val_idx] = data::split_by_subject(index, cfg.train_fraction, split_rng);
  for (const auto& e : train_idx.entries) {
    data.train_images.push_back(load_thermal(e.image_path));
    data.train_masks.push_back(load_mask_pgm(e.mask_path));
  }
  for (const auto& e : val_idx.entries) {
    data.val_images.push_back(load_thermal(e.image_path));
    data.val_masks.push_back(load_mask_pgm(e.mask_path));
  }
  return data;
}

}  // namespace samcl::config
