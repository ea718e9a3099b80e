#include "daformer/network/config.hpp"

#include <algorithm>

#include "daformer/core/errors.hpp"

namespace daformer {

void EncoderConfig::validate() const {
  if (in_channels <= 0) throw ConfigError("encoder: in_channels must be positive");
  int stride = 1;
  for (int s = 0; s < 4; ++s) {
    if (widths[s] <= 0 || depths[s] < 0 || heads[s] <= 0 || reduction[s] <= 0 ||
        patch_kernel[s] <= 0 || patch_stride[s] <= 0)
      throw ConfigError("encoder: stage " + std::to_string(s + 1) + " has a non-positive field");
    if (widths[s] % heads[s] != 0)
      throw ConfigError("encoder: width of stage " + std::to_string(s + 1) +
                        " not divisible by its heads");
    stride *= patch_stride[s];
  }
  if (stride != 32) throw ConfigError("encoder: stride product must be 32");
  if (mlp_ratio <= 0) throw ConfigError("encoder: mlp_ratio must be positive");
}

std::string to_string(DecoderVariant v) {
  switch (v) {
    case DecoderVariant::daformer: return "daformer";
    case DecoderVariant::mlp_fusion: return "mlp_fusion";
    case DecoderVariant::bottleneck_context_only: return "bottleneck_context_only";
    case DecoderVariant::no_dsc: return "no_dsc";
  }
  return "daformer";
}

DecoderVariant decoder_variant_from_string(const std::string& s) {
  if (s == "daformer") return DecoderVariant::daformer;
  if (s == "mlp_fusion") return DecoderVariant::mlp_fusion;
  if (s == "bottleneck_context_only") return DecoderVariant::bottleneck_context_only;
  if (s == "no_dsc") return DecoderVariant::no_dsc;
  throw ConfigError("unknown decoder variant: " + s);
}

void DecoderConfig::validate() const {
  if (embed_channels <= 0) throw ConfigError("decoder: embed_channels must be positive");
  if (norm_groups <= 0 || embed_channels % norm_groups != 0)
    throw ConfigError("decoder: embed_channels must be divisible by norm_groups");
  if (dilation_rates.empty() || dilation_rates.front() != 1)
    throw ConfigError("decoder: dilation rates must start at 1");
  for (std::size_t i = 1; i < dilation_rates.size(); ++i) {
    if (dilation_rates[i] <= dilation_rates[i - 1])
      throw ConfigError("decoder: dilation rates must be strictly increasing");
  }
}

std::vector<int> clamp_dilation_rates(const std::vector<int>& rates, int grid_h, int grid_w) {
  const int max_rate = std::max(1, (std::min(grid_h, grid_w) - 1) / 2);
  std::vector<int> out;
  for (int r : rates) {
    const int c = std::clamp(r, 1, max_rate);
    if (out.empty() || out.back() < c) out.push_back(c);
  }
  return out;
}

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (num_classes <= 0 || num_classes > 255) throw ConfigError("num_classes must be in [1, 255]");
  if (input_h <= 0 || input_w <= 0 || input_h % 32 != 0 || input_w % 32 != 0)
    throw ConfigError("input size must be a positive multiple of 32");
}

std::vector<int> ModelConfig::effective_rates() const {
  if (decoder.variant == DecoderVariant::bottleneck_context_only)
    return clamp_dilation_rates(decoder.dilation_rates, input_h / 32, input_w / 32);
  return clamp_dilation_rates(decoder.dilation_rates, input_h / 4, input_w / 4);
}

}  // namespace daformer
