#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "daformer/data/shapeworld.hpp"
#include "daformer/network/config.hpp"
#include "daformer/optim/optim.hpp"
#include "daformer/rcs/rcs.hpp"
#include "daformer/uda/train_step.hpp"
#include "daformer/uda/uda.hpp"

namespace daformer {

/// Proxy pretraining of the encoder: dense segmentation of randomly colored
/// shapes (K+1 classes) on wavy two-tone backgrounds.
struct PretrainConfig {
  bool enabled = true;
  int iterations = 3000;
  int batch_size = 4;
  /// Encoder rate; the proxy decoder uses 10x.
  double lr = 3e-4;
  int t_warm = 100;
  double weight_decay = 0.01;
  std::uint64_t seed = 1234;

  void validate() const;
};

struct RunConfig {
  DatasetSpec dataset = DatasetSpec::shapeworld_default();
  /// Directory of the generated-dataset cache; empty disables caching.
  std::string dataset_cache;
  AugmentationParams augmentation;
  ModelConfig model;
  UDAConfig uda;
  ScheduleConfig schedule;
  RCSConfig rcs{0.01, false};
  /// Re-derive the RCS temperature from the source statistics.
  bool rcs_auto_temperature = false;
  std::vector<double> rcs_candidates{0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0};
  bool fd = false;
  PretrainConfig pretrain;
  /// Directory where pretrained encoders are cached; empty disables caching.
  std::string pretrain_cache;
  TrainMode mode = TrainMode::uda;
  std::uint64_t seed = 0;
  int batch_size = 2;
  int eval_interval = 100;
  int checkpoint_interval = 500;
  /// Source images used to measure the bottleneck distance at eval points.
  int fd_probe_samples = 32;
  std::string out_dir;

  int iterations() const { return schedule.t_max; }
  /// Throws ConfigError describing the first invalid field.
  void validate() const;
};

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const DecoderConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const UDAConfig& c);
nlohmann::json to_json(const ScheduleConfig& c);
nlohmann::json to_json(const AugmentationParams& c);
nlohmann::json to_json(const PretrainConfig& c);
nlohmann::json to_json(const RunConfig& c);

/// Missing keys keep their defaults; unknown keys raise ConfigError so typos
/// in config files do not pass silently.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Desk-scale preset; values that differ from the full-scale setup are
/// listed in the README.
RunConfig desk_preset();

/// FNV-1a over the canonical JSON of the config without its output and
/// cache paths, as 16 hex digits.
std::string config_hash(const RunConfig& c);
std::string fnv1a_hex(const std::string& text);

}  // namespace daformer
