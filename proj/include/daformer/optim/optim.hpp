#pragma once

#include <cmath>
#include <map>
#include <string>

#include "daformer/core/errors.hpp"
#include "daformer/core/param.hpp"

namespace daformer {

enum class ParamGroup { encoder, decoder };

/// Parameters under "encoder." form the encoder group, all others the decoder
/// group.
inline ParamGroup param_group(const std::string& key) {
  return key.rfind("encoder.", 0) == 0 ? ParamGroup::encoder : ParamGroup::decoder;
}

struct ScheduleConfig {
  double lr_encoder = 6e-5;
  double decoder_lr_multiplier = 10.0;
  int t_warm = 150;
  int t_max = 4000;
  double weight_decay = 0.01;
  /// Without warmup the schedule is the pure linear decay from lr at t = 0.
  bool warmup = true;

  double base_lr(ParamGroup g) const {
    return g == ParamGroup::encoder ? lr_encoder : lr_encoder * decoder_lr_multiplier;
  }
  void validate() const;
};

/// Warmup eta*t/t_warm up to t_warm, then linear decay to 0 at t_max.
/// Throws ScheduleError for t outside [0, t_max].
double lr_at(const ScheduleConfig& cfg, int t, ParamGroup group);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamMoments {
  Mat<Scalar> m, v;
};

template <typename Scalar>
struct AdamWState {
  long step = 0;
  std::map<std::string, AdamMoments<Scalar>> moments;
};

/// One AdamW update of a single array. `t` is the 1-based step count used for
/// bias correction. Decay is decoupled and applied before the moment step.
template <typename Scalar>
void adamw_update(Mat<Scalar>& value, const Mat<Scalar>& grad, AdamMoments<Scalar>& mom, long t, double lr,
                  double wd, const AdamWConfig& cfg = {}) {
  if (mom.m.size() == 0) {
    mom.m = Mat<Scalar>::Zero(value.rows(), value.cols());
    mom.v = Mat<Scalar>::Zero(value.rows(), value.cols());
  }
  const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
  if (wd != 0.0) value *= Scalar(1.0 - lr * wd);
  mom.m = b1 * mom.m + (Scalar(1) - b1) * grad;
  mom.v.array() = b2 * mom.v.array() + (Scalar(1) - b2) * grad.array().square();
  const Scalar c1 = Scalar(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const Scalar c2 = Scalar(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  value.array() -= Scalar(lr) * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + Scalar(cfg.eps));
}

/// Applies AdamW to every parameter with its group learning rate. A
/// non-finite gradient raises TrainingError naming the parameter before any
/// array is modified.
template <typename Scalar>
void optimizer_step(ParamStore<Scalar>& params, AdamWState<Scalar>& state, double lr_encoder,
                    double lr_decoder, double weight_decay, const AdamWConfig& cfg = {}) {
  for (auto& [key, p] : params)
    if (!p.grad.allFinite()) throw TrainingError("non-finite gradient in " + key);
  ++state.step;
  for (auto& [key, p] : params) {
    const double lr = param_group(key) == ParamGroup::encoder ? lr_encoder : lr_decoder;
    adamw_update(p.value, p.grad, state.moments[key], state.step, lr, weight_decay, cfg);
  }
}

}  // namespace daformer
