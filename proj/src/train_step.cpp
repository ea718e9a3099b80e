#include "daformer/uda/train_step.hpp"

#include <cmath>

namespace daformer {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::source_only: return "source_only";
    case TrainMode::uda: return "uda";
    case TrainMode::oracle: return "oracle";
  }
  return "uda";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "source_only" || s == "source") return TrainMode::source_only;
  if (s == "uda") return TrainMode::uda;
  if (s == "oracle") return TrainMode::oracle;
  throw ConfigError("unknown mode: " + s);
}

namespace {

struct BatchForward {
  Var<float> logits;      // stacked full-resolution logits
  Var<float> bottleneck;  // stacked stride-32 features
  std::vector<std::uint8_t> labels;
};

BatchForward forward_batch(SegModel<float>& m, Tape<float>& tape, const std::vector<MatF>& images, int h, int w) {
  std::vector<Var<float>> logits, feats;
  for (const MatF& img : images) {
    ForwardResult<float> r = model_forward(m, tape, img, h, w);
    logits.push_back(resize_bilinear(r.logits, h, w).v);
    feats.push_back(r.features.bottleneck().v);
  }
  return {concat_rows(logits), concat_rows(feats), {}};
}

/// Stacked reference bottlenecks and the pooled thing mask for a batch.
std::pair<MatF, std::vector<std::uint8_t>> reference_targets(FDReference& ref, const std::vector<MatF>& images,
                                                             std::span<const SegSample> labeled, int num_classes,
                                                             const UDAConfig& cfg) {
  std::vector<MatF> feats;
  std::vector<std::uint8_t> mask;
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Tape<float> tape(false);
    const SegSample& s = labeled[i];
    FeaturePyramid<float> f = encoder_forward(ref.config, ref.params, tape, images[i], s.h, s.w);
    const FeatureMap<float>& b = f.bottleneck();
    feats.push_back(b.value());
    rows += b.value().rows();
    const PooledLabel pooled = downsample_label(s.label, s.h, s.w, num_classes, b.h, b.w, cfg.fd_keep_ratio);
    const std::vector<std::uint8_t> m = thing_mask(pooled, cfg.thing_classes);
    mask.insert(mask.end(), m.begin(), m.end());
  }
  MatF stacked(rows, feats.front().cols());
  Eigen::Index off = 0;
  for (const MatF& f : feats) {
    stacked.middleRows(off, f.rows()) = f;
    off += f.rows();
  }
  return {std::move(stacked), std::move(mask)};
}

}  // namespace

LossBundle train_step(TrainState& state, FDReference* reference, std::span<const SegSample> labeled,
                      std::span<const SegSample> target, const StepSettings& s, std::mt19937_64& aug_rng,
                      std::mt19937_64& mix_rng) {
  if (labeled.empty()) throw ConfigError("train_step: empty labeled batch");
  const bool self_training = s.mode == TrainMode::uda;
  if (self_training && target.size() != labeled.size())
    throw ConfigError("train_step: UDA needs one target image per labeled image");
  const int h = labeled.front().h, w = labeled.front().w;
  const int C = state.student.config.num_classes;
  SegModel<float>& student = state.student;
  student.params.zero_grad();
  LossBundle out;

  // Labeled term on augmented images.
  std::vector<MatF> src_images;
  std::vector<std::uint8_t> src_labels;
  for (const SegSample& x : labeled) {
    src_images.push_back(augment(x, s.aug, aug_rng).image);
    src_labels.insert(src_labels.end(), x.label.begin(), x.label.end());
  }
  Tape<float> tape(true);
  BatchForward src = forward_batch(student, tape, src_images, h, w);
  Var<float> loss_s = source_loss(src.logits, std::span<const std::uint8_t>(src_labels));
  Var<float> loss = loss_s;
  out.source = loss_s.value()(0, 0);

  if (s.fd && reference != nullptr && s.uda.lambda_fd > 0.0) {
    auto [ref_feats, mask] = reference_targets(*reference, src_images, labeled, C, s.uda);
    Var<float> loss_fd = fd_loss(src.bottleneck, ref_feats, std::span<const std::uint8_t>(mask));
    out.fd = loss_fd.value()(0, 0);
    loss = add(loss, scale(loss_fd, static_cast<float>(s.uda.lambda_fd)));
  }

  if (self_training) {
    std::vector<MatF> mixed_images;
    std::vector<std::uint8_t> mixed_labels;
    std::vector<float> mixed_weights;
    double q_sum = 0.0;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const PseudoLabels pl = generate_pseudo_labels(state.teacher.model, target[i].image, h, w, s.uda);
      q_sum += pl.q;
      const std::vector<int> classes = select_mix_classes(labeled[i].label, mix_rng);
      MixedSample mixed = class_mix(labeled[i].image, labeled[i].label, target[i].image, pl, classes);
      SegSample as_sample;
      as_sample.image = std::move(mixed.image);
      as_sample.h = h;
      as_sample.w = w;
      mixed_images.push_back(augment(as_sample, s.aug, aug_rng).image);
      mixed_labels.insert(mixed_labels.end(), mixed.label.begin(), mixed.label.end());
      mixed_weights.insert(mixed_weights.end(), mixed.weight.begin(), mixed.weight.end());
    }
    out.q_mean = q_sum / static_cast<double>(labeled.size());
    BatchForward mix = forward_batch(student, tape, mixed_images, h, w);
    Var<float> loss_t = cross_entropy(mix.logits, std::span<const std::uint8_t>(mixed_labels),
                                      std::span<const float>(mixed_weights));
    out.target = loss_t.value()(0, 0);
    loss = add(loss, loss_t);
  }

  out.total = total_loss(out.source, out.target, out.fd, s.fd ? s.uda.lambda_fd : 0.0);
  if (!std::isfinite(out.total)) throw TrainingError("non-finite loss");
  tape.backward(loss);
  optimizer_step(student.params, state.optimizer, s.lr_encoder, s.lr_decoder, s.weight_decay);
  if (self_training) ema_update(state.teacher, student.params, s.uda.alpha);
  return out;
}

double measure_feature_distance(SegModel<float>& student, FDReference& reference,
                                std::span<const SegSample> samples, const UDAConfig& cfg) {
  double sum = 0.0;
  long cells = 0;
  for (const SegSample& x : samples) {
    Tape<float> ts(false), tr(false);
    FeaturePyramid<float> fs = encoder_forward(student.config.encoder, student.params, ts, x.image, x.h, x.w);
    FeaturePyramid<float> fr = encoder_forward(reference.config, reference.params, tr, x.image, x.h, x.w);
    const FeatureMap<float>& b = fs.bottleneck();
    const PooledLabel pooled =
        downsample_label(x.label, x.h, x.w, student.config.num_classes, b.h, b.w, cfg.fd_keep_ratio);
    const std::vector<std::uint8_t> m = thing_mask(pooled, cfg.thing_classes);
    const Vec<float> d = (b.value() - fr.bottleneck().value()).rowwise().norm();
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (!m[j]) continue;
      sum += d[static_cast<Eigen::Index>(j)];
      ++cells;
    }
  }
  return cells > 0 ? sum / cells : std::nan("");
}

}  // namespace daformer
