#pragma once

#include <cstdint>
#include <vector>

#include "samcl/thermal.hpp"

namespace samcl::metrics {

struct EvalReport {
  std::vector<double> per_class_iou;  // NaN when the class is absent from both masks
  double mean_iou = 0.0;              // mean over classes with non-empty union, in [0,1]
  double pixel_accuracy = 0.0;
};

// Intersection-over-union per class; classes absent from both pred and gt are
// excluded from the mean. Symmetric in its arguments.
EvalReport miou(const LabelMask& pred, const LabelMask& gt, int num_classes);

// Dataset-level variant: counts accumulate across pairs before the ratio.
class MiouAccumulator {
 public:
  explicit MiouAccumulator(int num_classes);
  void add(const LabelMask& pred, const LabelMask& gt);
  EvalReport report() const;

 private:
  int num_classes_;
  std::vector<int64_t> intersection_;
  std::vector<int64_t> union_;
  int64_t correct_ = 0;
  int64_t total_ = 0;
};

}  // namespace samcl::metrics
