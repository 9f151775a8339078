#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string out;
};

RunResult run_cli(const std::string& args, const fs::path& workdir) {
  const fs::path out_file = workdir / "cli_out.txt";
  const std::string cmd =
      std::string(SAMCL_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(status);
  std::ifstream is(out_file);
  std::ostringstream buf;
  buf << is.rdbuf();
  r.out = buf.str();
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

fs::path make_temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_tiny_config(const fs::path& path, int epochs, const std::string& mode,
                       int workers = 1) {
  std::ofstream os(path);
  os << R"({
  "synthetic": {"height": 32, "width": 32, "num_subjects": 5, "frames_per_subject": 3},
  "data": {"train_subjects": 3, "val_subjects": 2},
  "net": {"base_channels": 4},
  "train": {"batch_size": 6, "epochs": )"
     << epochs << R"(, "loss_mode": ")" << mode << R"(", "aug_workers": )" << workers << R"(}
})";
}

std::string grep_line(const std::string& text, const std::string& prefix) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (line.rfind(prefix, 0) == 0) return line;
  return "";
}

}  // namespace

TEST_CASE("synth-data writes the requested pairs plus a manifest, deterministically") {
  const fs::path dir = make_temp_dir("samcl_cli_synth");
  auto r1 = run_cli("synth-data --out " + (dir / "a").string() + " --count 10 --seed 3", dir);
  REQUIRE(r1.exit_code == 0);
  int thrm = 0, pgm = 0, manifest = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const auto ext = e.path().extension().string();
    if (ext == ".thrm") ++thrm;
    if (ext == ".pgm") ++pgm;
    if (e.path().filename() == "manifest.json") ++manifest;
  }
  CHECK(thrm == 10);
  CHECK(pgm == 10);
  CHECK(manifest == 1);

  auto r2 = run_cli("synth-data --out " + (dir / "b").string() + " --count 10 --seed 3", dir);
  REQUIRE(r2.exit_code == 0);
  // manifest paths are relative, so even it is byte-identical
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const auto twin = dir / "b" / e.path().filename();
    REQUIRE(fs::exists(twin));
    CHECK(read_file(e.path()) == read_file(twin));
  }
  fs::remove_all(dir);
}

TEST_CASE("ablate with three modes emits a three-row CSV") {
  const fs::path dir = make_temp_dir("samcl_cli_ablate");
  const fs::path cfg = dir / "cfg.json";
  {
    std::ofstream os(cfg);
    os << R"({
  "synthetic": {"height": 32, "width": 32, "num_subjects": 5, "frames_per_subject": 2},
  "data": {"train_subjects": 3, "val_subjects": 2},
  "net": {"base_channels": 4},
  "train": {"batch_size": 6, "epochs": 1},
  "ablate": {"modes": ["rmi", "rmi+tiaug", "rmi+tiaug+samcl"], "seeds": [1]}
})";
  }
  auto r = run_cli("ablate --config " + cfg.string() + " --out " + (dir / "out").string(), dir);
  REQUIRE(r.exit_code == 0);
  std::ifstream is(dir / "out" / "ablation.csv");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);  // header + one row per mode
  CHECK(lines[1].rfind("rmi,", 0) == 0);
  CHECK(lines[2].rfind("rmi+tiaug,", 0) == 0);
  CHECK(lines[3].rfind("rmi+tiaug+samcl,", 0) == 0);
  // single seed: std columns are exactly zero
  CHECK(lines[1].find(",0,") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("synth-data manifest covers every configured subject") {
  const fs::path dir = make_temp_dir("samcl_cli_subjects");
  const fs::path cfg = dir / "cfg.json";
  {
    std::ofstream os(cfg);
    os << R"({"synthetic": {"num_subjects": 7, "frames_per_subject": 2}})";
  }
  auto r = run_cli("synth-data --out " + (dir / "d").string() + " --config " + cfg.string() +
                       " --seed 1",
                   dir);
  REQUIRE(r.exit_code == 0);
  const std::string manifest = read_file(dir / "d" / "manifest.json");
  int subjects = 0;
  for (int s = 0; s < 7; ++s) {
    char name[16];
    std::snprintf(name, sizeof(name), "synth%03d", s);
    if (manifest.find(name) != std::string::npos) ++subjects;
  }
  CHECK(subjects == 7);
  fs::remove_all(dir);
}

TEST_CASE("augment writes previews and replays its params to identical bytes") {
  const fs::path dir = make_temp_dir("samcl_cli_aug");
  REQUIRE(run_cli("synth-data --out " + (dir / "data").string() + " --count 1 --seed 5", dir)
              .exit_code == 0);
  const std::string img = (dir / "data" / "img_00000.thrm").string();
  const std::string mask = (dir / "data" / "mask_00000.pgm").string();

  auto r1 = run_cli("augment --in " + img + " --mask " + mask + " --out " +
                        (dir / "out1").string() + " --seed 9",
                    dir);
  REQUIRE(r1.exit_code == 0);
  for (const char* f : {"preview.pgm", "mask.pgm", "params.json", "histogram.csv"})
    CHECK(fs::exists(dir / "out1" / f));

  // histogram rows = configured bin count (44 default) + header
  {
    std::ifstream is(dir / "out1" / "histogram.csv");
    int lines = 0;
    std::string line;
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 45);
  }

  auto r2 = run_cli("augment --in " + img + " --mask " + mask + " --out " +
                        (dir / "out2").string() + " --replay " +
                        (dir / "out1" / "params.json").string(),
                    dir);
  REQUIRE(r2.exit_code == 0);
  CHECK(read_file(dir / "out1" / "preview.pgm") == read_file(dir / "out2" / "preview.pgm"));
  CHECK(read_file(dir / "out1" / "mask.pgm") == read_file(dir / "out2" / "mask.pgm"));
  fs::remove_all(dir);
}

TEST_CASE("augment with everything disabled previews the plain normalized input") {
  const fs::path dir = make_temp_dir("samcl_cli_aug_off");
  REQUIRE(run_cli("synth-data --out " + (dir / "data").string() + " --count 1 --seed 5", dir)
              .exit_code == 0);
  const fs::path cfg = dir / "cfg.json";
  {
    std::ofstream os(cfg);
    os << R"({"aug": {"occluders_enabled": false, "noise_enabled": false,
                      "hflip_enabled": false, "rotation_enabled": false}})";
  }
  auto r = run_cli("augment --in " + (dir / "data" / "img_00000.thrm").string() + " --mask " +
                       (dir / "data" / "mask_00000.pgm").string() + " --out " +
                       (dir / "out").string() + " --config " + cfg.string() + " --seed 1",
                   dir);
  REQUIRE(r.exit_code == 0);
  // the mask passes through untouched
  CHECK(read_file(dir / "out" / "mask.pgm") == read_file(dir / "data" / "mask_00000.pgm"));
  fs::remove_all(dir);
}

TEST_CASE("train --dry-run validates and writes nothing") {
  const fs::path dir = make_temp_dir("samcl_cli_dry");
  const fs::path cfg = dir / "cfg.json";
  write_tiny_config(cfg, 1, "rmi");
  auto r = run_cli("train --config " + cfg.string() + " --dry-run", dir);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "cli_out.txt"));
  int files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  CHECK(files == 2);  // the config and the captured output, nothing else
  fs::remove_all(dir);
}

TEST_CASE("schema violations exit with the config category and a pointer path") {
  const fs::path dir = make_temp_dir("samcl_cli_badcfg");
  const fs::path cfg = dir / "cfg.json";
  {
    std::ofstream os(cfg);
    os << R"({"train": {"batch_size": -3}})";
  }
  auto r = run_cli("train --config " + cfg.string() + " --dry-run", dir);
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("/train/batch_size") != std::string::npos);

  auto r2 = run_cli("eval --checkpoint /nonexistent.sckp", dir);
  CHECK(r2.exit_code == 3);
  fs::remove_all(dir);
}

TEST_CASE("eval reproduces the logged best validation mIoU exactly") {
  const fs::path dir = make_temp_dir("samcl_cli_eval");
  const fs::path cfg = dir / "cfg.json";
  write_tiny_config(cfg, 2, "rmi");
  auto train_run =
      run_cli("train --config " + cfg.string() + " --out " + (dir / "run").string(), dir);
  REQUIRE(train_run.exit_code == 0);
  const std::string train_line = grep_line(train_run.out, "TRAIN ");
  REQUIRE(!train_line.empty());
  const auto clean_pos = train_line.find("clean_miou=");
  REQUIRE(clean_pos != std::string::npos);
  const std::string logged =
      train_line.substr(clean_pos + 11, train_line.find(' ', clean_pos + 11) - clean_pos - 11);

  auto eval_run = run_cli("eval --checkpoint " + (dir / "run" / "checkpoint.sckp").string() +
                              " --config " + cfg.string(),
                          dir);
  REQUIRE(eval_run.exit_code == 0);
  const std::string eval_line = grep_line(eval_run.out, "EVAL ");
  REQUIRE(!eval_line.empty());
  CHECK(eval_line.find("clean_miou=" + logged) != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck command reports per-op errors and exits clean") {
  const fs::path dir = make_temp_dir("samcl_cli_grad");
  auto r = run_cli("gradcheck --module loss --seed 2", dir);
  CHECK(r.exit_code == 0);
  for (const char* op : {"rmi_distance", "ce_distance", "samcl_loss"})
    CHECK(r.out.find(op) != std::string::npos);
  // fixed seed: identical output
  auto r2 = run_cli("gradcheck --module loss --seed 2", dir);
  CHECK(r2.out == r.out);
  auto r3 = run_cli("gradcheck --module bogus --seed 2", dir);
  CHECK(r3.exit_code == 2);
  fs::remove_all(dir);
}
