#pragma once

#include <filesystem>
#include <ostream>
#include <random>

#include "daformer/data/shapeworld.hpp"
#include "daformer/experiment/config.hpp"
#include "daformer/uda/train_step.hpp"

namespace daformer {

/// One to three thing shapes on a two-tone textured background. Every color
/// is drawn at random, so only the shape identifies the class. Label 0 is
/// background and 1 + k marks the k-th entry of spec.thing_classes(). `*cls`
/// (optional) receives k of the first object.
SegSample render_proxy_sample(const DatasetSpec& spec, std::mt19937_64& rng, int* cls);

struct PretrainResult {
  FDReference encoder;
  /// mIoU of the proxy model on 50 held-out proxy images.
  double proxy_miou = 0.0;
};

/// Trains the encoder with a segmentation decoder on proxy samples (dense
/// shape segmentation, background + one class per thing shape) and returns
/// the encoder.
PretrainResult pretrain_encoder(const EncoderConfig& enc, const DatasetSpec& spec, const PretrainConfig& cfg,
                                std::ostream* log = nullptr);

/// Reuses <cache_dir>/encoder-<hash>.ckpt when present.
FDReference load_or_pretrain(const std::filesystem::path& cache_dir, const EncoderConfig& enc,
                             const DatasetSpec& spec, const PretrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace daformer
