#include "daformer/optim/optim.hpp"

namespace daformer {

void ScheduleConfig::validate() const {
  if (!(lr_encoder > 0.0)) throw ConfigError("schedule: base learning rate must be positive");
  if (!(decoder_lr_multiplier > 0.0)) throw ConfigError("schedule: decoder multiplier must be positive");
  if (t_max <= 0) throw ConfigError("schedule: t_max must be positive");
  if (warmup && (t_warm <= 0 || t_warm > t_max)) throw ConfigError("schedule: need 0 < t_warm <= t_max");
  if (weight_decay < 0.0) throw ConfigError("schedule: weight decay must be >= 0");
}

double lr_at(const ScheduleConfig& cfg, int t, ParamGroup group) {
  if (t < 0 || t > cfg.t_max)
    throw ScheduleError("lr_at: t=" + std::to_string(t) + " outside [0, " + std::to_string(cfg.t_max) + "]");
  const double eta = cfg.base_lr(group);
  if (!cfg.warmup) return eta * (static_cast<double>(cfg.t_max - t) / cfg.t_max);
  if (t <= cfg.t_warm) return eta * (static_cast<double>(t) / cfg.t_warm);
  return eta * (static_cast<double>(cfg.t_max - t) / static_cast<double>(cfg.t_max - cfg.t_warm));
}

}  // namespace daformer
