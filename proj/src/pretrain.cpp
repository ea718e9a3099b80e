#include "daformer/experiment/pretrain.hpp"

#include <cmath>
#include <numbers>

#include "daformer/core/random.hpp"
#include "daformer/eval/metrics.hpp"
#include "daformer/experiment/checkpoint.hpp"

namespace daformer {

namespace fs = std::filesystem;

namespace {

double uni(std::mt19937_64& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

std::array<float, 3> random_color(std::mt19937_64& rng) {
  return {static_cast<float>(uni(rng, 0, 1)), static_cast<float>(uni(rng, 0, 1)), static_cast<float>(uni(rng, 0, 1))};
}

float color_distance(const std::array<float, 3>& a, const std::array<float, 3>& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

}  // namespace

SegSample render_proxy_sample(const DatasetSpec& spec, std::mt19937_64& rng, int* cls) {
  const std::vector<int> things = spec.thing_classes();
  const int h = spec.height, w = spec.width;
  const int K = static_cast<int>(things.size());

  const std::array<float, 3> top = random_color(rng);
  const std::array<float, 3> bottom = random_color(rng);
  const double split = uni(rng, 0.25 * h, 0.75 * h);
  const double amp = uni(rng, 0.0, 0.06 * h), period = uni(rng, 0.5 * w, 1.5 * w);
  const double phase = uni(rng, 0.0, 2 * std::numbers::pi);
  const double tex_amp = uni(rng, 0.0, 0.15), tex_dir = uni(rng, 0.0, 2 * std::numbers::pi);
  const double tex_period = uni(rng, 12.0, 48.0), tex_phase = uni(rng, 0.0, 2 * std::numbers::pi);
  const double noise_sigma = uni(rng, 0.0, 0.04);
  const int blur = std::uniform_int_distribution<int>(0, 1)(rng);
  const int count = std::uniform_int_distribution<int>(1, 3)(rng);

  SegSample s;
  s.h = h;
  s.w = w;
  s.label.assign(static_cast<std::size_t>(h) * w, 0);
  // Object k is painted with colors[k]; label value 1 + class position.
  std::vector<std::array<float, 3>> colors(static_cast<std::size_t>(K + 1));
  for (int o = 0; o < count; ++o) {
    const int k = std::uniform_int_distribution<int>(0, K - 1)(rng);
    if (o == 0 && cls) *cls = k;
    std::array<float, 3> obj = random_color(rng);
    for (int tries = 0; tries < 20 && std::min(color_distance(obj, top), color_distance(obj, bottom)) < 0.35f;
         ++tries)
      obj = random_color(rng);
    colors[static_cast<std::size_t>(k + 1)] = obj;
    const double radius = uni(rng, spec.thing_radius_min, spec.thing_radius_max);
    const double angle = uni(rng, 0.0, 2 * std::numbers::pi);
    const double cx = uni(rng, 0.6 * radius, w - 0.6 * radius);
    const double cy = uni(rng, 0.6 * radius, h - 0.6 * radius);
    rasterize_shape(spec.classes[things[k]].shape, cx, cy, radius, angle, static_cast<std::uint8_t>(k + 1), h, w,
                    s.label);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  s.image.resize(static_cast<Eigen::Index>(h) * w, 3);
  const double kx = std::cos(tex_dir) * 2 * std::numbers::pi / tex_period;
  const double ky = std::sin(tex_dir) * 2 * std::numbers::pi / tex_period;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const bool upper = y + 0.5 < split + amp * std::sin(2 * std::numbers::pi * (x + 0.5) / period + phase);
      const auto& col = s.label[p] ? colors[s.label[p]] : (upper ? top : bottom);
      const double tex = tex_amp * std::sin(kx * x + ky * y + tex_phase);
      for (int c = 0; c < 3; ++c)
        s.image(static_cast<Eigen::Index>(p), c) = static_cast<float>(col[c] + tex + noise_sigma * noise(rng));
    }
  }
  if (blur) s.image = gaussian_blur(s.image, h, w, 1.0);
  s.image = s.image.cwiseMax(0.0f).cwiseMin(1.0f);
  return s;
}

PretrainResult pretrain_encoder(const EncoderConfig& enc, const DatasetSpec& spec, const PretrainConfig& cfg,
                                std::ostream* log) {
  cfg.validate();
  enc.validate();
  ModelConfig mc;
  mc.encoder = enc;
  mc.num_classes = static_cast<int>(spec.thing_classes().size()) + 1;
  mc.input_h = spec.height;
  mc.input_w = spec.width;
  std::mt19937_64 init_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(Stream::init)}));
  std::mt19937_64 data_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(Stream::pretrain)}));
  std::mt19937_64 val_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(Stream::pretrain), 1}));
  SegModel<float> model = build_model<float>(mc, init_rng);
  AdamWState<float> opt;
  ScheduleConfig sched;
  sched.lr_encoder = cfg.lr;
  sched.t_warm = std::max(1, cfg.t_warm);
  sched.t_max = std::max(cfg.iterations, sched.t_warm);
  sched.warmup = cfg.t_warm > 0;

  double loss_window = 0.0;
  int window = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    model.params.zero_grad();
    Tape<float> tape(true);
    std::vector<Var<float>> logits;
    std::vector<std::uint8_t> labels;
    for (int b = 0; b < cfg.batch_size; ++b) {
      SegSample s = render_proxy_sample(spec, data_rng, nullptr);
      ForwardResult<float> r = model_forward(model, tape, s.image, s.h, s.w);
      logits.push_back(resize_bilinear(r.logits, s.h, s.w).v);
      labels.insert(labels.end(), s.label.begin(), s.label.end());
    }
    Var<float> loss = cross_entropy(concat_rows(logits), std::span<const std::uint8_t>(labels));
    tape.backward(loss);
    const int t = std::min(it + 1, sched.t_max);
    optimizer_step(model.params, opt, lr_at(sched, t, ParamGroup::encoder), lr_at(sched, t, ParamGroup::decoder),
                   cfg.weight_decay);
    loss_window += loss.value()(0, 0);
    ++window;
    if (log && ((it + 1) % 100 == 0 || it + 1 == cfg.iterations)) {
      *log << "pretrain it " << it + 1 << " loss " << loss_window / window << "\n";
      loss_window = 0.0;
      window = 0;
    }
  }

  std::vector<SegSample> val;
  for (int i = 0; i < 50; ++i) val.push_back(render_proxy_sample(spec, val_rng, nullptr));
  ConfusionMatrix cm(mc.num_classes);
  for (const SegSample& s : val) cm.accumulate(argmax_labels(predict_logits(model, s.image, s.h, s.w)), s.label);
  PretrainResult res;
  res.proxy_miou = iou_report(cm).miou;
  if (log) *log << "pretrain proxy mIoU " << 100.0 * res.proxy_miou << "\n";
  res.encoder.config = enc;
  for (const auto& [key, p] : model.params) {
    if (param_group(key) != ParamGroup::encoder) continue;
    res.encoder.params.add(key, p.value.rows(), p.value.cols()).value = p.value;
  }
  return res;
}

FDReference load_or_pretrain(const fs::path& cache_dir, const EncoderConfig& enc, const DatasetSpec& spec,
                             const PretrainConfig& cfg, std::ostream* log) {
  nlohmann::json key{{"encoder", to_json(enc)}, {"pretrain", to_json(cfg)}, {"dataset", to_json(spec)}};
  key["dataset"].erase("num_source");
  key["dataset"].erase("num_target");
  key["dataset"].erase("num_target_val");
  key["dataset"].erase("source_style");
  key["dataset"].erase("target_style");
  key["dataset"].erase("seed");
  // The proxy task paints shapes with random colors.
  for (auto& c : key["dataset"]["classes"]) c.erase("color");
  const std::string hash = fnv1a_hex(key.dump());
  const fs::path file = cache_dir / ("encoder-" + hash + ".ckpt");
  if (!cache_dir.empty() && fs::exists(file)) {
    Checkpoint ck = load_checkpoint(file);
    FDReference ref;
    ref.config = enc;
    std::mt19937_64 rng(0);
    add_encoder_params(ref.params, enc, rng);
    unpack_params(ck, "encoder", ref.params);
    if (log) *log << "pretrained encoder loaded from " << file.string() << "\n";
    return ref;
  }
  PretrainResult res = pretrain_encoder(enc, spec, cfg, log);
  if (!cache_dir.empty()) {
    Checkpoint ck;
    ck.meta = key;
    ck.meta["hash"] = hash;
    ck.meta["proxy_miou"] = res.proxy_miou;
    pack_params(ck, "encoder", res.encoder.params);
    save_checkpoint(file, ck);
  }
  return res.encoder;
}

}  // namespace daformer
