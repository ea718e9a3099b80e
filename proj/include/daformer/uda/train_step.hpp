#pragma once

#include <random>
#include <span>
#include <string>

#include "daformer/data/shapeworld.hpp"
#include "daformer/network/model.hpp"
#include "daformer/optim/optim.hpp"
#include "daformer/uda/uda.hpp"

namespace daformer {

enum class TrainMode { source_only, uda, oracle };
std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

/// Frozen encoder the student bottleneck is pulled towards.
struct FDReference {
  EncoderConfig config;
  ParamStore<float> params;
};

struct TrainState {
  SegModel<float> student;
  TeacherState<float> teacher;
  AdamWState<float> optimizer;
};

struct StepSettings {
  TrainMode mode = TrainMode::uda;
  UDAConfig uda;
  AugmentationParams aug;
  bool fd = false;
  double lr_encoder = 0.0;
  double lr_decoder = 0.0;
  double weight_decay = 0.01;
};

struct LossBundle {
  double source = 0.0;
  double target = 0.0;
  double fd = 0.0;
  double total = 0.0;
  double q_mean = 0.0;
};

/// One optimization step.
///
/// The labeled batch is augmented and trains the cross-entropy term. In UDA
/// mode the teacher labels the clean target images, each labeled image is
/// ClassMix-ed onto its target partner and the augmented mix trains the
/// q-weighted term. With `fd` set and a reference given, the source
/// bottleneck is pulled towards the reference features on thing cells. After
/// AdamW the teacher takes one EMA step. Random draws: aug_rng for source
/// augmentation then mixed augmentation; mix_rng for class selection.
LossBundle train_step(TrainState& state, FDReference* reference, std::span<const SegSample> labeled,
                      std::span<const SegSample> target, const StepSettings& settings, std::mt19937_64& aug_rng,
                      std::mt19937_64& mix_rng);

/// Mean bottleneck distance to the reference over thing cells of `samples`
/// (no augmentation, no gradient); NaN when no cell is a thing cell.
double measure_feature_distance(SegModel<float>& student, FDReference& reference,
                                std::span<const SegSample> samples, const UDAConfig& cfg);

}  // namespace daformer
