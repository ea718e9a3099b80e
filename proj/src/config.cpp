#include "daformer/experiment/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "daformer/core/errors.hpp"

namespace daformer {

using nlohmann::json;

void PretrainConfig::validate() const {
  if (iterations < 0 || batch_size <= 0) throw ConfigError("pretrain: invalid iterations or batch size");
  if (!(lr > 0.0)) throw ConfigError("pretrain: lr must be positive");
  if (t_warm < 0) throw ConfigError("pretrain: t_warm must be >= 0");
}

void RunConfig::validate() const {
  dataset.validate();
  daformer::validate(dataset, augmentation);
  model.validate();
  uda.validate();
  schedule.validate();
  if (rcs.enabled) rcs.validate();
  pretrain.validate();
  if (model.num_classes != dataset.num_classes())
    throw ConfigError("model.num_classes does not match the dataset");
  if (model.input_h != augmentation.crop_h || model.input_w != augmentation.crop_w)
    throw ConfigError("model input size must equal the crop size");
  for (int c : uda.thing_classes)
    if (c < 0 || c >= dataset.num_classes()) throw ConfigError("uda.thing_classes: class id out of range");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (eval_interval <= 0) throw ConfigError("eval_interval must be positive");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
  if (fd_probe_samples < 0) throw ConfigError("fd_probe_samples must be >= 0");
  if (mode == TrainMode::oracle && dataset.num_target <= 0) throw ConfigError("oracle mode needs target labels");
  if (rcs_auto_temperature && rcs_candidates.empty()) throw ConfigError("rcs_candidates is empty");
}

// ---------------------------------------------------------------------------
// To JSON

json to_json(const EncoderConfig& c) {
  return json{{"in_channels", c.in_channels}, {"widths", c.widths},       {"depths", c.depths},
              {"heads", c.heads},             {"reduction", c.reduction}, {"patch_kernel", c.patch_kernel},
              {"patch_stride", c.patch_stride}, {"mlp_ratio", c.mlp_ratio}};
}

json to_json(const DecoderConfig& c) {
  return json{{"embed_channels", c.embed_channels},
              {"dilation_rates", c.dilation_rates},
              {"variant", to_string(c.variant)},
              {"norm_groups", c.norm_groups}};
}

json to_json(const ModelConfig& c) {
  return json{{"encoder", to_json(c.encoder)},
              {"decoder", to_json(c.decoder)},
              {"num_classes", c.num_classes},
              {"input_h", c.input_h},
              {"input_w", c.input_w}};
}

json to_json(const UDAConfig& c) {
  return json{{"tau", c.tau},
              {"alpha", c.alpha},
              {"lambda_fd", c.lambda_fd},
              {"fd_keep_ratio", c.fd_keep_ratio},
              {"thing_classes", c.thing_classes},
              {"margin_top", c.margin_top},
              {"margin_bottom", c.margin_bottom}};
}

json to_json(const ScheduleConfig& c) {
  return json{{"lr_encoder", c.lr_encoder}, {"decoder_lr_multiplier", c.decoder_lr_multiplier},
              {"t_warm", c.t_warm},         {"t_max", c.t_max},
              {"weight_decay", c.weight_decay}, {"warmup", c.warmup}};
}

json to_json(const AugmentationParams& c) {
  return json{{"jitter_strength", c.jitter_strength}, {"blur_probability", c.blur_probability},
              {"blur_sigma_min", c.blur_sigma_min},   {"blur_sigma_max", c.blur_sigma_max},
              {"crop_h", c.crop_h},                   {"crop_w", c.crop_w}};
}

json to_json(const PretrainConfig& c) {
  return json{{"enabled", c.enabled}, {"iterations", c.iterations}, {"batch_size", c.batch_size},
              {"lr", c.lr},           {"t_warm", c.t_warm},         {"weight_decay", c.weight_decay},
              {"seed", c.seed}};
}

json to_json(const RunConfig& c) {
  return json{{"dataset", to_json(c.dataset)},
              {"dataset_cache", c.dataset_cache},
              {"augmentation", to_json(c.augmentation)},
              {"model", to_json(c.model)},
              {"uda", to_json(c.uda)},
              {"schedule", to_json(c.schedule)},
              {"rcs", {{"enabled", c.rcs.enabled},
                       {"temperature", c.rcs.temperature},
                       {"auto_temperature", c.rcs_auto_temperature},
                       {"candidates", c.rcs_candidates}}},
              {"fd", c.fd},
              {"pretrain", to_json(c.pretrain)},
              {"pretrain_cache", c.pretrain_cache},
              {"mode", to_string(c.mode)},
              {"seed", c.seed},
              {"batch_size", c.batch_size},
              {"eval_interval", c.eval_interval},
              {"checkpoint_interval", c.checkpoint_interval},
              {"fd_probe_samples", c.fd_probe_samples},
              {"out_dir", c.out_dir}};
}

// ---------------------------------------------------------------------------
// From JSON

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

EncoderConfig encoder_from_json(const json& j) {
  check_keys(j, "model.encoder",
             {"in_channels", "widths", "depths", "heads", "reduction", "patch_kernel", "patch_stride", "mlp_ratio"});
  EncoderConfig c;
  const std::string w = "model.encoder";
  read(j, "in_channels", c.in_channels, w);
  read(j, "widths", c.widths, w);
  read(j, "depths", c.depths, w);
  read(j, "heads", c.heads, w);
  read(j, "reduction", c.reduction, w);
  read(j, "patch_kernel", c.patch_kernel, w);
  read(j, "patch_stride", c.patch_stride, w);
  read(j, "mlp_ratio", c.mlp_ratio, w);
  return c;
}

DecoderConfig decoder_from_json(const json& j) {
  check_keys(j, "model.decoder", {"embed_channels", "dilation_rates", "variant", "norm_groups"});
  DecoderConfig c;
  const std::string w = "model.decoder";
  read(j, "embed_channels", c.embed_channels, w);
  read(j, "dilation_rates", c.dilation_rates, w);
  read(j, "norm_groups", c.norm_groups, w);
  if (j.contains("variant")) c.variant = decoder_variant_from_string(j.at("variant").get<std::string>());
  return c;
}

ModelConfig model_from_json(const json& j) {
  check_keys(j, "model", {"encoder", "decoder", "num_classes", "input_h", "input_w"});
  ModelConfig c;
  if (j.contains("encoder")) c.encoder = encoder_from_json(j.at("encoder"));
  if (j.contains("decoder")) c.decoder = decoder_from_json(j.at("decoder"));
  read(j, "num_classes", c.num_classes, "model");
  read(j, "input_h", c.input_h, "model");
  read(j, "input_w", c.input_w, "model");
  return c;
}

UDAConfig uda_from_json(const json& j, UDAConfig c) {
  check_keys(j, "uda", {"tau", "alpha", "lambda_fd", "fd_keep_ratio", "thing_classes", "margin_top", "margin_bottom"});
  read(j, "tau", c.tau, "uda");
  read(j, "alpha", c.alpha, "uda");
  read(j, "lambda_fd", c.lambda_fd, "uda");
  read(j, "fd_keep_ratio", c.fd_keep_ratio, "uda");
  read(j, "thing_classes", c.thing_classes, "uda");
  read(j, "margin_top", c.margin_top, "uda");
  read(j, "margin_bottom", c.margin_bottom, "uda");
  return c;
}

ScheduleConfig schedule_from_json(const json& j, ScheduleConfig c) {
  check_keys(j, "schedule", {"lr_encoder", "decoder_lr_multiplier", "t_warm", "t_max", "weight_decay", "warmup"});
  read(j, "lr_encoder", c.lr_encoder, "schedule");
  read(j, "decoder_lr_multiplier", c.decoder_lr_multiplier, "schedule");
  read(j, "t_warm", c.t_warm, "schedule");
  read(j, "t_max", c.t_max, "schedule");
  read(j, "weight_decay", c.weight_decay, "schedule");
  read(j, "warmup", c.warmup, "schedule");
  return c;
}

AugmentationParams augmentation_from_json(const json& j, AugmentationParams c) {
  check_keys(j, "augmentation",
             {"jitter_strength", "blur_probability", "blur_sigma_min", "blur_sigma_max", "crop_h", "crop_w"});
  read(j, "jitter_strength", c.jitter_strength, "augmentation");
  read(j, "blur_probability", c.blur_probability, "augmentation");
  read(j, "blur_sigma_min", c.blur_sigma_min, "augmentation");
  read(j, "blur_sigma_max", c.blur_sigma_max, "augmentation");
  read(j, "crop_h", c.crop_h, "augmentation");
  read(j, "crop_w", c.crop_w, "augmentation");
  return c;
}

PretrainConfig pretrain_from_json(const json& j, PretrainConfig c) {
  check_keys(j, "pretrain", {"enabled", "iterations", "batch_size", "lr", "t_warm", "weight_decay", "seed"});
  read(j, "enabled", c.enabled, "pretrain");
  read(j, "iterations", c.iterations, "pretrain");
  read(j, "batch_size", c.batch_size, "pretrain");
  read(j, "lr", c.lr, "pretrain");
  read(j, "t_warm", c.t_warm, "pretrain");
  read(j, "weight_decay", c.weight_decay, "pretrain");
  read(j, "seed", c.seed, "pretrain");
  return c;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  check_keys(j, "config",
             {"dataset", "dataset_cache", "augmentation", "model", "uda", "schedule", "rcs", "fd", "pretrain",
              "pretrain_cache", "mode", "seed", "batch_size", "eval_interval", "checkpoint_interval",
              "fd_probe_samples", "out_dir", "preset"});
  RunConfig c = desk_preset();
  if (j.contains("preset") && j.at("preset").get<std::string>() != "desk")
    throw ConfigError("unknown preset: " + j.at("preset").get<std::string>());
  try {
    if (j.contains("dataset")) c.dataset = dataset_spec_from_json(j.at("dataset"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  read(j, "dataset_cache", c.dataset_cache, "config");
  if (j.contains("augmentation")) c.augmentation = augmentation_from_json(j.at("augmentation"), c.augmentation);
  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  if (j.contains("uda")) c.uda = uda_from_json(j.at("uda"), c.uda);
  if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"), c.schedule);
  if (j.contains("rcs")) {
    const json& r = j.at("rcs");
    check_keys(r, "rcs", {"enabled", "temperature", "auto_temperature", "candidates"});
    read(r, "enabled", c.rcs.enabled, "rcs");
    read(r, "temperature", c.rcs.temperature, "rcs");
    read(r, "auto_temperature", c.rcs_auto_temperature, "rcs");
    read(r, "candidates", c.rcs_candidates, "rcs");
  }
  read(j, "fd", c.fd, "config");
  if (j.contains("pretrain")) c.pretrain = pretrain_from_json(j.at("pretrain"), c.pretrain);
  read(j, "pretrain_cache", c.pretrain_cache, "config");
  if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
  read(j, "seed", c.seed, "config");
  read(j, "batch_size", c.batch_size, "config");
  read(j, "eval_interval", c.eval_interval, "config");
  read(j, "checkpoint_interval", c.checkpoint_interval, "config");
  read(j, "fd_probe_samples", c.fd_probe_samples, "config");
  read(j, "out_dir", c.out_dir, "config");
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

RunConfig desk_preset() {
  RunConfig c;
  c.dataset = DatasetSpec::shapeworld_default();
  c.model.num_classes = c.dataset.num_classes();
  c.uda.thing_classes = c.dataset.thing_classes();
  c.uda.fd_keep_ratio = 0.25;
  c.schedule.t_warm = 150;
  c.schedule.t_max = 4000;
  return c;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("out_dir");
  j.erase("dataset_cache");
  j.erase("pretrain_cache");
  j.erase("checkpoint_interval");
  return fnv1a_hex(j.dump());
}

}  // namespace daformer
