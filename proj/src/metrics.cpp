#include "daformer/eval/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

#include "daformer/core/errors.hpp"

namespace daformer {

ConfusionMatrix::ConfusionMatrix(int num_classes) : c_(num_classes) {
  if (num_classes <= 0) throw ConfigError("confusion matrix needs C > 0");
  counts_.assign(static_cast<std::size_t>(c_) * c_, 0);
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) throw ShapeError("accumulate: prediction and label sizes differ");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kIgnoreLabel) continue;
    if (gt[i] >= c_ || pred[i] >= c_) throw ShapeError("accumulate: label out of range");
    ++counts_[static_cast<std::size_t>(gt[i]) * c_ + pred[i]];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.c_ != c_) throw ShapeError("merge: class count differs");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

IoUReport iou_report(const ConfusionMatrix& cm) {
  const int C = cm.num_classes();
  IoUReport r;
  r.iou.assign(C, std::numeric_limits<double>::quiet_NaN());
  r.included.assign(C, false);
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < C; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t fp = 0, fn = 0;
    for (int k = 0; k < C; ++k) {
      if (k == c) continue;
      fp += cm.at(k, c);
      fn += cm.at(c, k);
    }
    const std::uint64_t uni = tp + fp + fn;
    if (uni == 0) continue;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    r.included[c] = true;
    sum += r.iou[c];
    ++n;
  }
  r.miou = n > 0 ? sum / n : 0.0;
  return r;
}

double relative_performance(double uda_miou, double oracle_miou) {
  if (!(oracle_miou > 0.0)) throw ConfigError("relative performance needs a positive oracle mIoU");
  return 100.0 * uda_miou / oracle_miou;
}

double mean_iou_over(const IoUReport& r, std::span<const int> classes) {
  double sum = 0.0;
  int n = 0;
  for (int c : classes) {
    if (c < 0 || c >= static_cast<int>(r.iou.size()) || !r.included[c]) continue;
    sum += r.iou[c];
    ++n;
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

void write_report_csv(std::ostream& os, const IoUReport& r, std::span<const std::string> class_names,
                      double oracle_miou) {
  os << "class,iou\n" << std::fixed << std::setprecision(2);
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    os << (c < class_names.size() ? class_names[c] : "class" + std::to_string(c)) << ',';
    if (r.included[c]) os << 100.0 * r.iou[c];
    else os << "nan";
    os << '\n';
  }
  os << "mIoU," << 100.0 * r.miou << '\n';
  if (oracle_miou > 0.0) os << "Rel.," << relative_performance(r.miou, oracle_miou) << '\n';
  os << std::defaultfloat;
}

std::vector<std::uint8_t> argmax_labels(const MatF& logits) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index k;
    logits.row(i).maxCoeff(&k);
    out[i] = static_cast<std::uint8_t>(k);
  }
  return out;
}

}  // namespace daformer
