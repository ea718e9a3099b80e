#pragma once

#include <array>
#include <string>
#include <vector>

namespace daformer {

/// Miniature hierarchical transformer encoder ("MiT-mini").
struct EncoderConfig {
  int in_channels = 3;
  std::array<int, 4> widths{32, 64, 128, 256};
  std::array<int, 4> depths{2, 2, 2, 2};
  std::array<int, 4> heads{1, 2, 4, 8};
  std::array<int, 4> reduction{8, 4, 2, 1};
  std::array<int, 4> patch_kernel{7, 3, 3, 3};
  std::array<int, 4> patch_stride{4, 2, 2, 2};
  int mlp_ratio = 4;

  /// Throws ConfigError unless there are four positive stages, the stride
  /// product is 32 and every width is divisible by its head count.
  void validate() const;
};

enum class DecoderVariant { daformer, mlp_fusion, bottleneck_context_only, no_dsc };

std::string to_string(DecoderVariant v);
DecoderVariant decoder_variant_from_string(const std::string& s);

struct DecoderConfig {
  int embed_channels = 64;
  std::vector<int> dilation_rates{1, 6, 12, 18};
  DecoderVariant variant = DecoderVariant::daformer;
  int norm_groups = 8;

  void validate() const;
};

/// Clamps dilation rates so that a dilated 3x3 kernel (extent 2r+1) fits a
/// grid_h x grid_w map, then drops duplicates. The order is preserved, so the
/// result stays strictly increasing.
std::vector<int> clamp_dilation_rates(const std::vector<int>& rates, int grid_h, int grid_w);

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  int num_classes = 8;
  /// Training input size; fixes the decoder's effective dilation rates.
  int input_h = 64;
  int input_w = 64;

  void validate() const;
  /// Rates actually instantiated by the decoder for this input size.
  std::vector<int> effective_rates() const;
};

}  // namespace daformer
