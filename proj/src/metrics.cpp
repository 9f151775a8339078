#include "samcl/metrics.hpp"

#include <limits>
#include <string>

#include "samcl/errors.hpp"

namespace samcl::metrics {

MiouAccumulator::MiouAccumulator(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) throw ContractError("MiouAccumulator: num_classes must be >= 1");
  intersection_.assign(static_cast<size_t>(num_classes), 0);
  union_.assign(static_cast<size_t>(num_classes), 0);
}

void MiouAccumulator::add(const LabelMask& pred, const LabelMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw ContractError("miou: mask sizes differ, " + std::to_string(pred.height) + "x" +
                        std::to_string(pred.width) + " vs " + std::to_string(gt.height) + "x" +
                        std::to_string(gt.width));
  for (size_t i = 0; i < pred.classes.size(); ++i) {
    const int p = pred.classes[i];
    const int g = gt.classes[i];
    if (p >= num_classes_ || g >= num_classes_)
      throw ContractError("miou: class index exceeds num_classes");
    if (p == g) {
      intersection_[static_cast<size_t>(p)] += 1;
      union_[static_cast<size_t>(p)] += 1;
      correct_ += 1;
    } else {
      union_[static_cast<size_t>(p)] += 1;
      union_[static_cast<size_t>(g)] += 1;
    }
    total_ += 1;
  }
}

EvalReport MiouAccumulator::report() const {
  EvalReport rep;
  rep.per_class_iou.assign(static_cast<size_t>(num_classes_),
                           std::numeric_limits<double>::quiet_NaN());
  double acc = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes_; ++c) {
    if (union_[static_cast<size_t>(c)] == 0) continue;
    const double iou = static_cast<double>(intersection_[static_cast<size_t>(c)]) /
                       static_cast<double>(union_[static_cast<size_t>(c)]);
    rep.per_class_iou[static_cast<size_t>(c)] = iou;
    acc += iou;
    present += 1;
  }
  rep.mean_iou = present > 0 ? acc / present : 0.0;
  rep.pixel_accuracy = total_ > 0 ? static_cast<double>(correct_) / static_cast<double>(total_)
                                  : 0.0;
  return rep;
}

EvalReport miou(const LabelMask& pred, const LabelMask& gt, int num_classes) {
  MiouAccumulator acc(num_classes);
  acc.add(pred, gt);
  return acc.report();
}

}  // namespace samcl::metrics
