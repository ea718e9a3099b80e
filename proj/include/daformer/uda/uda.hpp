#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "daformer/core/autograd.hpp"
#include "daformer/core/errors.hpp"
#include "daformer/core/param.hpp"
#include "daformer/network/model.hpp"

namespace daformer {

struct UDAConfig {
  double tau = 0.968;
  double alpha = 0.99;
  double lambda_fd = 0.005;
  /// Keep ratio of the label pooling that builds the thing mask.
  double fd_keep_ratio = 0.75;
  std::vector<int> thing_classes;
  /// Pseudo-label rows set to IGNORE at the top and bottom of the image.
  int margin_top = 0;
  int margin_bottom = 0;

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("uda: tau must be in (0,1)");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("uda: alpha must be in [0,1)");
    if (!(lambda_fd >= 0.0)) throw ConfigError("uda: lambda_fd must be >= 0");
    if (!(fd_keep_ratio > 0.0 && fd_keep_ratio <= 1.0)) throw ConfigError("uda: keep ratio must be in (0,1]");
    if (margin_top < 0 || margin_bottom < 0) throw ConfigError("uda: margins must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Cross-entropy

/// Weighted mean cross-entropy over pixels whose label is not IGNORE:
/// sum_i w_i * (-log softmax(z_i)[y_i]) / #{i : y_i != IGNORE}.
/// An empty weight span means w_i = 1. When every pixel is IGNORE the result
/// is a constant 0 that carries no gradient.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const std::uint8_t> labels,
                          std::span<const Scalar> weights = {}) {
  const Eigen::Index n = logits.rows(), C = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("cross_entropy: label count mismatch");
  if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != n)
    throw ShapeError("cross_entropy: weight count mismatch");
  Eigen::Index counted = 0;
  for (std::uint8_t l : labels) {
    if (l == kIgnoreLabel) continue;
    if (l >= C) throw ShapeError("cross_entropy: label out of range");
    ++counted;
  }
  Tape<Scalar>* tape = logits.tape;
  if (counted == 0) return tape->constant(Mat<Scalar>::Zero(1, 1));

  const Mat<Scalar>& z = logits.value();
  Mat<Scalar> prob(n, C);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar m = z.row(i).maxCoeff();
    prob.row(i) = (z.row(i).array() - m).exp();
    const Scalar s = prob.row(i).sum();
    prob.row(i) /= s;
    if (labels[i] == kIgnoreLabel) continue;
    const Scalar w = weights.empty() ? Scalar(1) : weights[i];
    total += w * (std::log(s) + m - z(i, labels[i]));
  }
  const Scalar inv = Scalar(1) / Scalar(counted);
  Mat<Scalar> out(1, 1);
  out(0, 0) = total * inv;
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  std::vector<Scalar> wts(weights.begin(), weights.end());
  const int il = logits.id;
  return tape->push(std::move(out), logits.needs_grad(),
                    [il, lab = std::move(lab), wts = std::move(wts), prob = std::move(prob), inv](
                        Tape<Scalar>& t, int self) {
                      const Scalar g = t.grad(self)(0, 0) * inv;
                      Mat<Scalar>& gz = t.grad(il);
                      for (Eigen::Index i = 0; i < prob.rows(); ++i) {
                        if (lab[i] == kIgnoreLabel) continue;
                        const Scalar w = wts.empty() ? Scalar(1) : wts[i];
                        gz.row(i) += (g * w) * prob.row(i);
                        gz(i, lab[i]) -= g * w;
                      }
                    });
}

/// Mean cross-entropy of the student on labeled (source or oracle) pixels.
template <typename Scalar>
Var<Scalar> source_loss(Var<Scalar> logits, std::span<const std::uint8_t> labels) {
  return cross_entropy(logits, labels);
}

// ---------------------------------------------------------------------------
// Pseudo-labels

struct PseudoLabels {
  std::vector<std::uint8_t> labels;
  /// Fraction of all h*w pixels whose max softmax exceeds tau.
  double q = 0.0;
  int h = 0;
  int w = 0;
};

/// Argmax labels and quality from teacher logits ((h*w) x C). q is counted
/// over every pixel before the margin rows are set to IGNORE.
template <typename Scalar>
PseudoLabels pseudo_labels_from_logits(const Mat<Scalar>& logits, int h, int w, double tau, int margin_top = 0,
                                       int margin_bottom = 0) {
  if (logits.rows() != static_cast<Eigen::Index>(h) * w) throw ShapeError("pseudo labels: logits/size mismatch");
  PseudoLabels pl;
  pl.h = h;
  pl.w = w;
  pl.labels.resize(static_cast<std::size_t>(h) * w);
  std::size_t confident = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index k;
    const Scalar m = logits.row(i).maxCoeff(&k);
    const Scalar s = (logits.row(i).array() - m).exp().sum();
    // max softmax = 1 / s
    if (Scalar(1) / s > Scalar(tau)) ++confident;
    pl.labels[i] = static_cast<std::uint8_t>(k);
  }
  pl.q = static_cast<double>(confident) / static_cast<double>(logits.rows());
  for (int y = 0; y < h; ++y) {
    if (y >= margin_top && y < h - margin_bottom) continue;
    std::fill_n(pl.labels.begin() + static_cast<std::size_t>(y) * w, w, kIgnoreLabel);
  }
  return pl;
}

/// Teacher prediction on a clean target image. The teacher runs on a
/// non-recording tape.
template <typename Scalar>
PseudoLabels generate_pseudo_labels(SegModel<Scalar>& teacher, const Mat<Scalar>& image, int h, int w,
                                    const UDAConfig& cfg) {
  return pseudo_labels_from_logits(predict_logits(teacher, image, h, w), h, w, cfg.tau, cfg.margin_top,
                                   cfg.margin_bottom);
}

/// q times the cross-entropy against the pseudo-labels.
template <typename Scalar>
Var<Scalar> target_loss(Var<Scalar> logits, const PseudoLabels& pl) {
  return scale(cross_entropy(logits, std::span<const std::uint8_t>(pl.labels)), Scalar(pl.q));
}

// ---------------------------------------------------------------------------
// ClassMix

/// Classes present (non-IGNORE) in a label map, ascending.
std::vector<int> present_classes(std::span<const std::uint8_t> label);

/// Picks ceil(n/2) of the n present classes uniformly without replacement
/// (partial Fisher-Yates over the ascending class list); result ascending.
std::vector<int> select_mix_classes(std::span<const std::uint8_t> label, std::mt19937_64& rng);

struct MixedSample {
  MatF image;
  std::vector<std::uint8_t> label;
  /// Per-pixel loss weight: 1 on pasted source pixels, q elsewhere.
  std::vector<float> weight;
  std::vector<std::uint8_t> mask;
  int h = 0;
  int w = 0;
};

/// Pastes the source pixels of `classes` onto the target image.
MixedSample class_mix(const MatF& src_image, std::span<const std::uint8_t> src_label, const MatF& tgt_image,
                      const PseudoLabels& pl, std::span<const int> classes);

// ---------------------------------------------------------------------------
// EMA teacher

template <typename Scalar>
struct TeacherState {
  SegModel<Scalar> model;
  long step = 0;
};

/// phi <- alpha * phi + (1 - alpha) * theta for every array.
template <typename Scalar>
void ema_update(ParamStore<Scalar>& teacher, const ParamStore<Scalar>& student, double alpha) {
  if (!same_structure(teacher, student)) throw StateError("ema_update: teacher and student structures differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("ema_update: alpha outside [0,1]");
  const Scalar a = Scalar(alpha), b = Scalar(1.0 - alpha);
  for (auto& [key, p] : teacher) {
    if (alpha == 1.0) continue;
    if (alpha == 0.0) p.value = student.at(key).value;
    else p.value = a * p.value + b * student.at(key).value;
  }
}

template <typename Scalar>
void ema_update(TeacherState<Scalar>& teacher, const ParamStore<Scalar>& student, double alpha) {
  ema_update(teacher.model.params, student, alpha);
  ++teacher.step;
}

// ---------------------------------------------------------------------------
// Feature distance

/// Per-cell class membership after average pooling of the one-hot labels.
struct PooledLabel {
  int hf = 0;
  int wf = 0;
  int num_classes = 0;
  /// keep[cell * C + c] = 1 when the pooled share of class c is > r.
  std::vector<std::uint8_t> keep;

  bool kept(int cell, int c) const { return keep[static_cast<std::size_t>(cell) * num_classes + c] != 0; }
};

/// Average-pools the one-hot labels with patch (h/hf) x (w/wf); IGNORE pixels
/// count in the patch area but belong to no class.
PooledLabel downsample_label(std::span<const std::uint8_t> label, int h, int w, int num_classes, int hf, int wf,
                             double r);

/// 1 where any kept class of the cell is a thing class.
std::vector<std::uint8_t> thing_mask(const PooledLabel& y, std::span<const int> thing_classes);

/// Mask-averaged Euclidean distance between student and reference feature
/// rows. Rows of several images may be stacked; the mask is then pooled over
/// all of them. An empty mask gives a constant 0.
template <typename Scalar>
Var<Scalar> fd_loss(Var<Scalar> student, const Mat<Scalar>& reference, std::span<const std::uint8_t> mask) {
  if (student.rows() != reference.rows() || student.cols() != reference.cols())
    throw ShapeError("fd_loss: feature shapes differ");
  if (static_cast<Eigen::Index>(mask.size()) != student.rows()) throw ShapeError("fd_loss: mask size mismatch");
  Tape<Scalar>* tape = student.tape;
  Eigen::Index count = 0;
  for (std::uint8_t m : mask) count += m != 0;
  if (count == 0) return tape->constant(Mat<Scalar>::Zero(1, 1));
  Mat<Scalar> diff = student.value() - reference;
  Vec<Scalar> dist = diff.rowwise().norm();
  Scalar total = 0;
  for (Eigen::Index j = 0; j < dist.size(); ++j)
    if (mask[j]) total += dist[j];
  const Scalar inv = Scalar(1) / Scalar(count);
  Mat<Scalar> out(1, 1);
  out(0, 0) = total * inv;
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  const int is = student.id;
  return tape->push(std::move(out), student.needs_grad(),
                    [is, m = std::move(m), diff = std::move(diff), dist = std::move(dist), inv](Tape<Scalar>& t,
                                                                                               int self) {
                      const Scalar g = t.grad(self)(0, 0) * inv;
                      Mat<Scalar>& gs = t.grad(is);
                      for (Eigen::Index j = 0; j < dist.size(); ++j) {
                        if (!m[j] || dist[j] == Scalar(0)) continue;
                        gs.row(j) += (g / dist[j]) * diff.row(j);
                      }
                    });
}

template <typename Scalar>
Var<Scalar> total_loss(Var<Scalar> source, Var<Scalar> target, Var<Scalar> fd, double lambda_fd) {
  return add(add(source, target), scale(fd, Scalar(lambda_fd)));
}

inline double total_loss(double source, double target, double fd, double lambda_fd) {
  return source + target + lambda_fd * fd;
}

}  // namespace daformer
