#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "daformer/core/tensor.hpp"

namespace daformer {

/// C x C pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return c_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * c_ + pred]; }
  std::uint64_t total() const;

  /// Adds every pixel whose ground truth is not IGNORE. Throws ShapeError on
  /// size mismatch or out-of-range labels.
  void accumulate(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
  void merge(const ConfusionMatrix& other);

 private:
  int c_;
  std::vector<std::uint64_t> counts_;
};

struct IoUReport {
  /// NaN for classes with empty union.
  std::vector<double> iou;
  std::vector<bool> included;
  double miou = 0.0;
};

/// IoU_c = TP / (TP + FP + FN); classes with zero union are left out of mIoU.
IoUReport iou_report(const ConfusionMatrix& cm);

/// 100 * uda / oracle. Throws ConfigError when oracle <= 0.
double relative_performance(double uda_miou, double oracle_miou);

/// Mean of the IoUs of `classes` that are included in the report; NaN when
/// none is.
double mean_iou_over(const IoUReport& r, std::span<const int> classes);

/// One row per class (name, IoU in %), then mIoU and, when oracle_miou > 0,
/// Rel.
void write_report_csv(std::ostream& os, const IoUReport& r, std::span<const std::string> class_names,
                      double oracle_miou = 0.0);

/// Hard prediction from (h*w) x C logits.
std::vector<std::uint8_t> argmax_labels(const MatF& logits);

}  // namespace daformer
