#pragma once

#include <array>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "daformer/core/nn.hpp"
#include "daformer/core/param.hpp"
#include "daformer/network/config.hpp"

namespace daformer {

/// Multi-level encoder output F_1..F_4 at strides 4, 8, 16, 32.
template <typename Scalar>
struct FeaturePyramid {
  std::array<FeatureMap<Scalar>, 4> levels;

  const FeatureMap<Scalar>& bottleneck() const { return levels[3]; }
};

// ---------------------------------------------------------------------------
// Parameter creation

namespace init {

template <typename Scalar>
void trunc_normal(Param<Scalar>& p, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    double v = dist(rng);
    while (std::abs(v) > 2.0 * stddev) v = dist(rng);
    p.value.data()[i] = static_cast<Scalar>(v);
  }
}

template <typename Scalar>
void normal(Param<Scalar>& p, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
void add_linear(ParamStore<Scalar>& s, const std::string& key, int in, int out, bool bias,
                std::mt19937_64& rng) {
  trunc_normal(s.add(key + ".weight", in, out), 0.02, rng);
  if (bias) s.add(key + ".bias", 1, out);
}

/// Conv weights ~ N(0, 2 / fan_out) with fan_out = k*k*out / groups.
template <typename Scalar>
void add_conv(ParamStore<Scalar>& s, const std::string& key, int k, int in, int out, bool bias,
              std::mt19937_64& rng) {
  normal(s.add(key + ".weight", k * k * in, out), std::sqrt(2.0 / (k * k * out)), rng);
  if (bias) s.add(key + ".bias", 1, out);
}

template <typename Scalar>
void add_depthwise(ParamStore<Scalar>& s, const std::string& key, int k, int channels, bool bias,
                   std::mt19937_64& rng) {
  normal(s.add(key + ".weight", k * k, channels), std::sqrt(2.0 / (k * k)), rng);
  if (bias) s.add(key + ".bias", 1, channels);
}

template <typename Scalar>
void add_norm(ParamStore<Scalar>& s, const std::string& key, int channels) {
  s.add(key + ".gamma", 1, channels).value.setOnes();
  s.add(key + ".beta", 1, channels);
}

}  // namespace init

inline std::string stage_key(int s) { return "encoder.stage" + std::to_string(s + 1); }
inline std::string block_key(int s, int b) { return stage_key(s) + ".block" + std::to_string(b); }

template <typename Scalar>
void add_encoder_params(ParamStore<Scalar>& s, const EncoderConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  int in = cfg.in_channels;
  for (int st = 0; st < 4; ++st) {
    const int d = cfg.widths[st];
    const std::string sk = stage_key(st);
    init::add_conv(s, sk + ".patch", cfg.patch_kernel[st], in, d, true, rng);
    init::add_norm(s, sk + ".patch_norm", d);
    for (int b = 0; b < cfg.depths[st]; ++b) {
      const std::string bk = block_key(st, b);
      init::add_norm(s, bk + ".norm1", d);
      init::add_linear(s, bk + ".attn.q", d, d, true, rng);
      init::add_linear(s, bk + ".attn.k", d, d, true, rng);
      init::add_linear(s, bk + ".attn.v", d, d, true, rng);
      if (cfg.reduction[st] > 1) {
        init::add_conv(s, bk + ".attn.sr", cfg.reduction[st], d, d, true, rng);
        init::add_norm(s, bk + ".attn.sr_norm", d);
      }
      init::add_linear(s, bk + ".attn.proj", d, d, true, rng);
      init::add_norm(s, bk + ".norm2", d);
      const int hidden = d * cfg.mlp_ratio;
      init::add_linear(s, bk + ".mlp.fc1", d, hidden, true, rng);
      init::add_depthwise(s, bk + ".mlp.dwconv", 3, hidden, true, rng);
      init::add_linear(s, bk + ".mlp.fc2", hidden, d, true, rng);
    }
    init::add_norm(s, sk + ".norm", d);
    in = d;
  }
}

namespace detail {

template <typename Scalar>
void add_dsc_branches(ParamStore<Scalar>& s, const std::string& prefix, int in, int ce,
                      std::size_t n, bool separable, std::mt19937_64& rng) {
  for (std::size_t j = 0; j < n; ++j) {
    const std::string bk = prefix + ".branch" + std::to_string(j);
    if (separable) {
      init::add_depthwise(s, bk + ".depthwise", 3, in, false, rng);
      init::add_conv(s, bk + ".pointwise", 1, in, ce, false, rng);
    } else {
      init::add_conv(s, bk + ".conv", 3, in, ce, false, rng);
    }
    init::add_norm(s, bk + ".norm", ce);
  }
  if (n > 1) {
    init::add_conv(s, prefix + ".bottleneck", 1, static_cast<int>(n) * ce, ce, false, rng);
    init::add_norm(s, prefix + ".bottleneck.norm", ce);
  }
}

}  // namespace detail

template <typename Scalar>
void add_decoder_params(ParamStore<Scalar>& s, const DecoderConfig& cfg,
                        const std::array<int, 4>& in_widths, int num_classes,
                        const std::vector<int>& rates, std::mt19937_64& rng) {
  cfg.validate();
  const int ce = cfg.embed_channels;
  const bool context_only = cfg.variant == DecoderVariant::bottleneck_context_only;
  for (int i = 0; i < 4; ++i) {
    if (context_only && i == 3) continue;
    const std::string key = "decoder.embed" + std::to_string(i + 1);
    init::add_conv(s, key, 1, in_widths[i], ce, false, rng);
    init::add_norm(s, key + ".norm", ce);
  }
  switch (cfg.variant) {
    case DecoderVariant::daformer:
      detail::add_dsc_branches(s, "decoder.fusion", 4 * ce, ce, rates.size(), true, rng);
      break;
    case DecoderVariant::no_dsc:
      detail::add_dsc_branches(s, "decoder.fusion", 4 * ce, ce, rates.size(), false, rng);
      break;
    case DecoderVariant::bottleneck_context_only:
      detail::add_dsc_branches(s, "decoder.context", in_widths[3], ce, rates.size(), true, rng);
      [[fallthrough]];
    case DecoderVariant::mlp_fusion:
      init::add_conv(s, "decoder.fusion.linear", 1, 4 * ce, ce, false, rng);
      init::add_norm(s, "decoder.fusion.linear.norm", ce);
      break;
  }
  init::normal(s.add("decoder.classifier.weight", ce, num_classes), 0.01, rng);
  s.add("decoder.classifier.bias", 1, num_classes);
}

// ---------------------------------------------------------------------------
// Encoder

/// Sequence-reduced multi-head self-attention on the tokens of `x`.
///
/// Queries keep all N tokens; keys and values come from a stride-R, kernel-R
/// convolution of the token map (N / R^2 tokens) followed by layer norm.
/// R = 1 is plain multi-head self-attention.
template <typename Scalar>
Var<Scalar> efficient_self_attention(const FeatureMap<Scalar>& x, ParamStore<Scalar>& p,
                                     const std::string& prefix, int heads, int reduction) {
  if (reduction <= 0 || x.h % reduction != 0 || x.w % reduction != 0)
    throw ShapeError("efficient_self_attention: token grid not divisible by reduction ratio");
  Var<Scalar> q = linear(x.v, p.at(prefix + ".q.weight"), &p.at(prefix + ".q.bias"));
  Var<Scalar> kv_in = x.v;
  if (reduction > 1) {
    ConvGeometry g{reduction, reduction, 0, 1};
    FeatureMap<Scalar> r = conv2d(x, p.at(prefix + ".sr.weight"), &p.at(prefix + ".sr.bias"), g);
    kv_in = layer_norm(r.v, p.at(prefix + ".sr_norm.gamma"), p.at(prefix + ".sr_norm.beta"));
  }
  Var<Scalar> k = linear(kv_in, p.at(prefix + ".k.weight"), &p.at(prefix + ".k.bias"));
  Var<Scalar> v = linear(kv_in, p.at(prefix + ".v.weight"), &p.at(prefix + ".v.bias"));
  Var<Scalar> o = multi_head_attention(q, k, v, heads);
  return linear(o, p.at(prefix + ".proj.weight"), &p.at(prefix + ".proj.bias"));
}

/// fc1 -> depthwise 3x3 -> GELU -> fc2.
template <typename Scalar>
Var<Scalar> mix_ffn(const FeatureMap<Scalar>& x, ParamStore<Scalar>& p, const std::string& prefix) {
  Var<Scalar> h = linear(x.v, p.at(prefix + ".fc1.weight"), &p.at(prefix + ".fc1.bias"));
  FeatureMap<Scalar> hm{h, x.h, x.w};
  hm = depthwise_conv2d(hm, p.at(prefix + ".dwconv.weight"), &p.at(prefix + ".dwconv.bias"), 3, 1);
  return linear(gelu(hm.v), p.at(prefix + ".fc2.weight"), &p.at(prefix + ".fc2.bias"));
}

/// Pre-norm transformer block: x + attn(LN(x)), then x + ffn(LN(x)).
template <typename Scalar>
FeatureMap<Scalar> transformer_block(const FeatureMap<Scalar>& x, ParamStore<Scalar>& p,
                                     const std::string& prefix, int heads, int reduction) {
  Var<Scalar> n1 = layer_norm(x.v, p.at(prefix + ".norm1.gamma"), p.at(prefix + ".norm1.beta"));
  Var<Scalar> a = efficient_self_attention(FeatureMap<Scalar>{n1, x.h, x.w}, p, prefix + ".attn",
                                           heads, reduction);
  Var<Scalar> x1 = add(x.v, a);
  Var<Scalar> n2 = layer_norm(x1, p.at(prefix + ".norm2.gamma"), p.at(prefix + ".norm2.beta"));
  Var<Scalar> m = mix_ffn(FeatureMap<Scalar>{n2, x.h, x.w}, p, prefix + ".mlp");
  return {add(x1, m), x.h, x.w};
}

/// Runs the four encoder stages on an (h*w) x in_channels image.
template <typename Scalar>
FeaturePyramid<Scalar> encoder_forward(const EncoderConfig& cfg, ParamStore<Scalar>& p,
                                       Tape<Scalar>& tape, const Mat<Scalar>& image, int h, int w) {
  if (h % 32 != 0 || w % 32 != 0 || h <= 0 || w <= 0)
    throw ShapeError("encoder_forward: input size must be divisible by 32");
  if (image.rows() != static_cast<Eigen::Index>(h) * w || image.cols() != cfg.in_channels)
    throw ShapeError("encoder_forward: image shape does not match h*w x channels");
  FeaturePyramid<Scalar> out;
  FeatureMap<Scalar> x{tape.constant(image), h, w};
  for (int st = 0; st < 4; ++st) {
    const std::string sk = stage_key(st);
    const int k = cfg.patch_kernel[st];
    ConvGeometry g{k, cfg.patch_stride[st], k / 2, 1};
    x = conv2d(x, p.at(sk + ".patch.weight"), &p.at(sk + ".patch.bias"), g);
    x.v = layer_norm(x.v, p.at(sk + ".patch_norm.gamma"), p.at(sk + ".patch_norm.beta"));
    for (int b = 0; b < cfg.depths[st]; ++b)
      x = transformer_block(x, p, block_key(st, b), cfg.heads[st], cfg.reduction[st]);
    x.v = layer_norm(x.v, p.at(sk + ".norm.gamma"), p.at(sk + ".norm.beta"));
    out.levels[st] = x;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoders

namespace detail {

template <typename Scalar>
FeatureMap<Scalar> conv_norm_relu(const FeatureMap<Scalar>& x, ParamStore<Scalar>& p,
                                  const std::string& key, int groups) {
  FeatureMap<Scalar> y = conv2d(x, p.at(key + ".weight"), nullptr, ConvGeometry{});
  y.v = relu(group_norm(y.v, groups, p.at(key + ".norm.gamma"), p.at(key + ".norm.beta")));
  return y;
}

/// Parallel dilated branches, each emitting C_e channels, fused by a 1x1
/// conv when there is more than one branch.
template <typename Scalar>
FeatureMap<Scalar> context_fusion(const FeatureMap<Scalar>& x, ParamStore<Scalar>& p,
                                  const std::string& prefix, std::span<const int> rates,
                                  bool separable, int groups) {
  std::vector<Var<Scalar>> outs;
  for (std::size_t j = 0; j < rates.size(); ++j) {
    const std::string bk = prefix + ".branch" + std::to_string(j);
    FeatureMap<Scalar> y;
    if (separable) {
      y = depthwise_conv2d(x, p.at(bk + ".depthwise.weight"), nullptr, 3, rates[j]);
      y = conv2d(y, p.at(bk + ".pointwise.weight"), nullptr, ConvGeometry{});
    } else {
      y = conv2d(x, p.at(bk + ".conv.weight"), nullptr, ConvGeometry{3, 1, rates[j], rates[j]});
    }
    y.v = relu(group_norm(y.v, groups, p.at(bk + ".norm.gamma"), p.at(bk + ".norm.beta")));
    outs.push_back(y.v);
  }
  if (outs.size() == 1) return {outs.front(), x.h, x.w};
  FeatureMap<Scalar> cat{concat_cols(outs), x.h, x.w};
  return conv_norm_relu(cat, p, prefix + ".bottleneck", groups);
}

template <typename Scalar>
FeatureMap<Scalar> classify(const FeatureMap<Scalar>& x, ParamStore<Scalar>& p) {
  return {linear(x.v, p.at("decoder.classifier.weight"), &p.at("decoder.classifier.bias")), x.h, x.w};
}

template <typename Scalar>
void check_pyramid(const FeaturePyramid<Scalar>& f) {
  for (int i = 1; i < 4; ++i) {
    if (f.levels[i].h != (f.levels[i - 1].h + 1) / 2 || f.levels[i].w != (f.levels[i - 1].w + 1) / 2)
      throw ShapeError("decoder: pyramid levels are not successive factor-2 downsamplings");
  }
}

/// 1x1 embedding of each level to C_e, resized to the F_1 grid.
template <typename Scalar>
std::vector<Var<Scalar>> embed_levels(const FeaturePyramid<Scalar>& f, ParamStore<Scalar>& p,
                                      int groups, int count) {
  std::vector<Var<Scalar>> out;
  const int h = f.levels[0].h, w = f.levels[0].w;
  for (int i = 0; i < count; ++i) {
    const std::string key = "decoder.embed" + std::to_string(i + 1);
    FeatureMap<Scalar> e = conv_norm_relu(f.levels[i], p, key, groups);
    out.push_back(resize_bilinear(e, h, w).v);
  }
  return out;
}

}  // namespace detail

/// Context-aware multi-level fusion decoder. Returns C logits on the F_1 grid.
template <typename Scalar>
FeatureMap<Scalar> daformer_decode(const DecoderConfig& cfg, std::span<const int> rates,
                                   ParamStore<Scalar>& p, const FeaturePyramid<Scalar>& f) {
  detail::check_pyramid(f);
  const int h = f.levels[0].h, w = f.levels[0].w;
  FeatureMap<Scalar> stacked{concat_cols(detail::embed_levels(f, p, cfg.norm_groups, 4)), h, w};
  const bool separable = cfg.variant != DecoderVariant::no_dsc;
  FeatureMap<Scalar> fused =
      detail::context_fusion(stacked, p, "decoder.fusion", rates, separable, cfg.norm_groups);
  return detail::classify(fused, p);
}

/// Baseline multi-level decoder: embed, resize, concatenate, one 1x1 fusion.
template <typename Scalar>
FeatureMap<Scalar> mlp_fusion_decode(const DecoderConfig& cfg, ParamStore<Scalar>& p,
                                     const FeaturePyramid<Scalar>& f) {
  detail::check_pyramid(f);
  const int h = f.levels[0].h, w = f.levels[0].w;
  FeatureMap<Scalar> stacked{concat_cols(detail::embed_levels(f, p, cfg.norm_groups, 4)), h, w};
  return detail::classify(detail::conv_norm_relu(stacked, p, "decoder.fusion.linear", cfg.norm_groups), p);
}

/// Context fusion applied to the bottleneck only; the other levels are
/// embedded as in the baseline decoder.
template <typename Scalar>
FeatureMap<Scalar> bottleneck_context_decode(const DecoderConfig& cfg, std::span<const int> rates,
                                             ParamStore<Scalar>& p, const FeaturePyramid<Scalar>& f) {
  detail::check_pyramid(f);
  const int h = f.levels[0].h, w = f.levels[0].w;
  std::vector<Var<Scalar>> parts = detail::embed_levels(f, p, cfg.norm_groups, 3);
  FeatureMap<Scalar> ctx =
      detail::context_fusion(f.levels[3], p, "decoder.context", rates, true, cfg.norm_groups);
  parts.push_back(resize_bilinear(ctx, h, w).v);
  FeatureMap<Scalar> stacked{concat_cols(parts), h, w};
  return detail::classify(detail::conv_norm_relu(stacked, p, "decoder.fusion.linear", cfg.norm_groups), p);
}

template <typename Scalar>
FeatureMap<Scalar> decoder_forward(const DecoderConfig& cfg, std::span<const int> rates,
                                   ParamStore<Scalar>& p, const FeaturePyramid<Scalar>& f) {
  switch (cfg.variant) {
    case DecoderVariant::mlp_fusion: return mlp_fusion_decode(cfg, p, f);
    case DecoderVariant::bottleneck_context_only: return bottleneck_context_decode(cfg, rates, p, f);
    case DecoderVariant::daformer:
    case DecoderVariant::no_dsc: break;
  }
  return daformer_decode(cfg, rates, p, f);
}

// ---------------------------------------------------------------------------
// Full segmentation model

/// Encoder + decoder parameters with their configuration.
template <typename Scalar>
struct SegModel {
  ModelConfig config;
  std::vector<int> rates;
  ParamStore<Scalar> params;

  template <typename Other>
  SegModel<Other> cast() const {
    return SegModel<Other>{config, rates, params.template cast<Other>()};
  }
};

template <typename Scalar>
SegModel<Scalar> build_model(const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  SegModel<Scalar> m{cfg, cfg.effective_rates(), {}};
  add_encoder_params(m.params, cfg.encoder, rng);
  add_decoder_params(m.params, cfg.decoder, cfg.encoder.widths, cfg.num_classes, m.rates, rng);
  return m;
}

template <typename Scalar>
struct ForwardResult {
  FeaturePyramid<Scalar> features;
  FeatureMap<Scalar> logits;  // stride 4
};

template <typename Scalar>
ForwardResult<Scalar> model_forward(SegModel<Scalar>& m, Tape<Scalar>& tape, const Mat<Scalar>& image,
                                    int h, int w) {
  ForwardResult<Scalar> r;
  r.features = encoder_forward(m.config.encoder, m.params, tape, image, h, w);
  r.logits = decoder_forward(m.config.decoder, std::span<const int>(m.rates), m.params, r.features);
  return r;
}

/// Full-resolution logits ((h*w) x C) for a single image, without gradients.
template <typename Scalar>
Mat<Scalar> predict_logits(SegModel<Scalar>& m, const Mat<Scalar>& image, int h, int w) {
  Tape<Scalar> tape(false);
  ForwardResult<Scalar> r = model_forward(m, tape, image, h, w);
  return resize_bilinear(r.logits, h, w).value();
}

}  // namespace daformer
