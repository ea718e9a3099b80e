#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "daformer/uda/train_step.hpp"

using namespace daformer;

namespace {

double ce_of(const MatD& z, const std::vector<std::uint8_t>& y, const std::vector<double>& w = {}) {
  Tape<double> t(false);
  return cross_entropy(t.constant(z), std::span<const std::uint8_t>(y), std::span<const double>(w)).value()(0, 0);
}

std::vector<std::uint8_t> random_labels(std::mt19937_64& rng, std::size_t n, int C) {
  std::uniform_int_distribution<int> d(0, C - 1);
  std::vector<std::uint8_t> out(n);
  for (auto& l : out) l = static_cast<std::uint8_t>(d(rng));
  return out;
}

MatD random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Central differences over every coordinate of p against the gradient the
// tape accumulated into p.grad.
int check_grad(Param<double>& p, const std::function<double()>& value) {
  int checked = 0;
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    const double old = p.value.data()[i], h = 1e-6;
    p.value.data()[i] = old + h;
    const double lp = value();
    p.value.data()[i] = old - h;
    const double lm = value();
    p.value.data()[i] = old;
    const double fd = (lp - lm) / (2 * h), an = p.grad.data()[i];
    INFO("coordinate " << i << " fd " << fd << " analytic " << an);
    CHECK(std::abs(fd - an) <= 1e-6 + 1e-5 * (std::abs(fd) + std::abs(an)));
    ++checked;
  }
  return checked;
}

}  // namespace

TEST_CASE("cross-entropy examples") {
  MatD z(1, 3);
  z << 1000, 0, 0;
  CHECK(ce_of(z, {0}) == 0.0);
  CHECK(ce_of(MatD::Zero(5, 4), {0, 1, 2, 3, 1}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // 2x2 image, 3 classes, direct formula
  MatD z4(4, 3);
  z4 << 1, 2, 3, 0.5, -1, 0, 2, 2, 2, -3, 0, 1;
  const std::vector<std::uint8_t> y = {2, 0, 1, kIgnoreLabel};
  double want = 0;
  for (int i = 0; i < 3; ++i) want += -std::log(std::exp(z4(i, y[i])) / z4.row(i).array().exp().sum());
  CHECK(ce_of(z4, y) == doctest::Approx(want / 3).epsilon(1e-12));

  CHECK(ce_of(z4, {kIgnoreLabel, kIgnoreLabel, kIgnoreLabel, kIgnoreLabel}) == 0.0);
  CHECK_THROWS_AS(ce_of(z4, {0, 1}), ShapeError);
  CHECK_THROWS_AS(ce_of(z4, {0, 1, 2, 3}), ShapeError);
}

TEST_CASE("pseudo-label quality") {
  MatD onehot = MatD::Zero(16, 3);
  for (int i = 0; i < 16; ++i) onehot(i, i % 3) = 100;
  PseudoLabels pl = pseudo_labels_from_logits(onehot, 4, 4, 0.968);
  CHECK(pl.q == 1.0);
  for (int i = 0; i < 16; ++i) CHECK(pl.labels[i] == i % 3);

  CHECK(pseudo_labels_from_logits(MatD(MatD::Zero(16, 3)), 4, 4, 0.968).q == 0.0);

  MatD five = MatD::Zero(16, 3);
  for (int i = 0; i < 5; ++i) five(i * 3, 1) = 10;
  CHECK(pseudo_labels_from_logits(five, 4, 4, 0.968).q == 0.3125);

  // max softmax of two equal logits is exactly 0.5; the threshold is strict
  CHECK(pseudo_labels_from_logits(MatD(MatD::Zero(4, 2)), 2, 2, 0.5).q == 0.0);
  CHECK(pseudo_labels_from_logits(MatD(MatD::Zero(4, 2)), 2, 2, 0.4999).q == 1.0);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const MatD z = random_mat(rng, 64, 5, -4, 4);
    int count = 0;
    for (int i = 0; i < 64; ++i) {
      const double p = z.row(i).array().exp().maxCoeff() / z.row(i).array().exp().sum();
      count += p > 0.7;
    }
    CHECK(pseudo_labels_from_logits(z, 8, 8, 0.7).q == static_cast<double>(count) / 64);
  }
}

TEST_CASE("margin rows are ignored but still counted in q") {
  MatD z = MatD::Zero(8 * 4, 2);
  z.col(0).setConstant(50);
  const PseudoLabels pl = pseudo_labels_from_logits(z, 8, 4, 0.9, 2, 1);
  CHECK(pl.q == 1.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x) CHECK(pl.labels[y * 4 + x] == ((y < 2 || y >= 7) ? kIgnoreLabel : 0));
}

TEST_CASE("target loss scales with q") {
  std::mt19937_64 rng(6);
  const MatD z = random_mat(rng, 16, 4);
  PseudoLabels pl;
  pl.h = pl.w = 4;
  pl.labels = random_labels(rng, 16, 4);
  Tape<double> t(false);
  const Var<double> v = t.constant(z);
  pl.q = 0.0;
  CHECK(target_loss(v, pl).value()(0, 0) == 0.0);
  pl.q = 1.0;
  const double full = source_loss(v, std::span<const std::uint8_t>(pl.labels)).value()(0, 0);
  CHECK(target_loss(v, pl).value()(0, 0) == full);
  pl.q = 0.5;
  CHECK(target_loss(v, pl).value()(0, 0) == full / 2);
}

TEST_CASE("class mix") {
  std::mt19937_64 rng(7);
  const int n = 36;
  const MatF src = random_mat(rng, n, 3).cast<float>();
  const MatF tgt = random_mat(rng, n, 3).cast<float>();
  std::vector<std::uint8_t> sl = random_labels(rng, n, 4);
  sl[3] = kIgnoreLabel;
  PseudoLabels pl;
  pl.h = pl.w = 6;
  pl.q = 0.25;
  pl.labels = random_labels(rng, n, 4);

  SUBCASE("all present classes paste the whole labeled image") {
    const std::vector<int> all = present_classes(sl);
    const MixedSample m = class_mix(src, sl, tgt, pl, all);
    for (int i = 0; i < n; ++i) {
      if (i == 3) continue;
      CHECK(m.label[i] == sl[i]);
      CHECK(m.weight[i] == 1.0f);
      CHECK(m.image.row(i) == src.row(i));
    }
    // IGNORE source pixels keep the target
    CHECK(m.mask[3] == 0);
    CHECK(m.label[3] == pl.labels[3]);
  }
  SUBCASE("no classes leave the target untouched") {
    const MixedSample m = class_mix(src, sl, tgt, pl, {});
    CHECK(m.image == tgt);
    CHECK(m.label == pl.labels);
    for (float w : m.weight) CHECK(w == 0.25f);
    for (auto v : m.mask) CHECK(v == 0);
  }
  SUBCASE("mask is the union of the per-class masks") {
    for (int trial = 0; trial < 20; ++trial) {
      std::mt19937_64 pick(static_cast<std::uint64_t>(trial));
      const std::vector<int> cls = select_mix_classes(sl, pick);
      const std::vector<int> present = present_classes(sl);
      CHECK(cls.size() == (present.size() + 1) / 2);
      CHECK(std::is_sorted(cls.begin(), cls.end()));
      CHECK(std::set<int>(cls.begin(), cls.end()).size() == cls.size());
      const MixedSample m = class_mix(src, sl, tgt, pl, cls);
      for (int i = 0; i < n; ++i) {
        bool in = false;
        for (int c : cls) in = in || sl[i] == c;
        CHECK(m.mask[i] == (in ? 1 : 0));
        CHECK(m.label[i] == (in ? sl[i] : pl.labels[i]));
        CHECK(m.weight[i] == (in ? 1.0f : 0.25f));
      }
    }
  }
  CHECK_THROWS_AS(class_mix(src, sl, tgt.topRows(10), pl, {}), ShapeError);
}

TEST_CASE("select_mix_classes replays with the same seed") {
  std::vector<std::uint8_t> l = {0, 1, 2, 3, 4, 5, 6};
  std::mt19937_64 a(3), b(3);
  CHECK(select_mix_classes(l, a) == select_mix_classes(l, b));
  std::vector<std::uint8_t> single = {2, 2, 2};
  std::mt19937_64 c(1);
  CHECK(select_mix_classes(single, c) == std::vector<int>{2});
}

TEST_CASE("EMA update") {
  std::mt19937_64 rng(8);
  ParamStore<double> student, teacher;
  student.add("a", 2, 3).value = random_mat(rng, 2, 3);
  teacher.add("a", 2, 3).value = random_mat(rng, 2, 3);
  const MatD before = teacher.at("a").value;
  ema_update(teacher, student, 1.0);
  CHECK(teacher.at("a").value == before);
  ema_update(teacher, student, 0.0);
  CHECK(teacher.at("a").value == student.at("a").value);

  ParamStore<double> s0, t0;
  s0.add("x", 1, 1).value(0, 0) = 0.0;
  t0.add("x", 1, 1).value(0, 0) = 2.0;
  for (int i = 0; i < 100; ++i) ema_update(t0, s0, 0.99);
  const double want = 2.0 * std::pow(0.99, 100);
  CHECK(std::abs(t0.at("x").value(0, 0) - want) / want < 1e-12);

  ParamStore<double> other;
  other.add("b", 2, 3);
  CHECK_THROWS_AS(ema_update(teacher, other, 0.5), StateError);
}

TEST_CASE("label pooling") {
  SUBCASE("constant map") {
    std::vector<std::uint8_t> l(16, 2);
    const PooledLabel p = downsample_label(l, 4, 4, 3, 2, 2, 0.75);
    for (int cell = 0; cell < 4; ++cell) {
      CHECK(p.kept(cell, 2));
      CHECK_FALSE(p.kept(cell, 0));
      CHECK_FALSE(p.kept(cell, 1));
    }
  }
  SUBCASE("the share must exceed r") {
    std::vector<std::uint8_t> l = {1, 1, 1, 0};
    CHECK_FALSE(downsample_label(l, 2, 2, 2, 1, 1, 0.75).kept(0, 1));
    l[3] = 1;
    CHECK(downsample_label(l, 2, 2, 2, 1, 1, 0.75).kept(0, 1));
    l = {1, 1, 1, kIgnoreLabel};
    CHECK_FALSE(downsample_label(l, 2, 2, 2, 1, 1, 0.75).kept(0, 1));
  }
  SUBCASE("brute force") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::uint8_t> l = random_labels(rng, 16 * 16, 3);
      // blocky maps so that some cells pass high ratios
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          if ((x / 4 + y / 4 + trial) % 3 == 0) l[y * 16 + x] = static_cast<std::uint8_t>(trial % 3);
      const double r = 0.2 + 0.05 * (trial % 10);
      const PooledLabel p = downsample_label(l, 16, 16, 3, 4, 4, r);
      for (int cy = 0; cy < 4; ++cy)
        for (int cx = 0; cx < 4; ++cx)
          for (int c = 0; c < 3; ++c) {
            int cnt = 0;
            for (int y = cy * 4; y < cy * 4 + 4; ++y)
              for (int x = cx * 4; x < cx * 4 + 4; ++x) cnt += l[y * 16 + x] == c;
            CHECK(p.kept(cy * 4 + cx, c) == (cnt / 16.0 > r));
          }
    }
  }
}

TEST_CASE("thing mask") {
  std::vector<std::uint8_t> l = {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 0, 0, 2, 2, 0, 0};
  const PooledLabel p = downsample_label(l, 4, 4, 3, 2, 2, 0.75);
  const std::vector<int> none = {}, things = {1, 2}, all = {0, 1, 2};
  CHECK(thing_mask(p, none) == std::vector<std::uint8_t>{0, 0, 0, 0});
  CHECK(thing_mask(p, all) == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK(thing_mask(p, things) == std::vector<std::uint8_t>{0, 1, 1, 0});
}

TEST_CASE("feature distance loss") {
  Tape<double> t(true);
  MatD ref(2, 2);
  ref << 1, 1, 2, 2;
  MatD f = ref;
  const std::vector<std::uint8_t> both = {1, 1}, none = {0, 0};
  CHECK(fd_loss(t.constant(f), ref, both).value()(0, 0) == 0.0);

  f(0, 0) += 3;
  f(1, 1) += 4;
  CHECK(fd_loss(t.constant(f), ref, both).value()(0, 0) == 3.5);
  CHECK(fd_loss(t.constant(f), ref, std::vector<std::uint8_t>{0, 1}).value()(0, 0) == 4.0);

  Var<double> v = t.variable(f);
  Var<double> l = fd_loss(v, ref, none);
  CHECK(l.value()(0, 0) == 0.0);
  t.backward(l);
  CHECK(v.grad().isZero());

  CHECK_THROWS_AS(fd_loss(t.constant(f), ref, std::vector<std::uint8_t>{1}), ShapeError);
}

TEST_CASE("total loss") {
  CHECK(total_loss(1.0, 1.0, 1.0, 0.005) == doctest::Approx(2.005).epsilon(1e-15));
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 3);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng), lam = u(rng);
    CHECK(total_loss(2 * a, 2 * b, 2 * c, lam) == doctest::Approx(2 * total_loss(a, b, c, lam)));
    CHECK(total_loss(a, b, c, 0.0) == a + b);
  }
}

TEST_CASE("loss gradients match central differences") {
  // Synthetic student: per-pixel features X (8x8 image, 5 channels) -> logits
  // through W1; 2x2 pooled features -> 6-channel bottleneck through W2.
  std::mt19937_64 rng(12);
  const int h = 8, w = 8, C = 4;
  const MatD X = random_mat(rng, h * w, 5);
  const MatD Xp = random_mat(rng, 4, 5);
  const MatD ref = random_mat(rng, 4, 6);
  Param<double> W1(5, C), W2(5, 6);
  W1.value = random_mat(rng, 5, C);
  W2.value = random_mat(rng, 5, 6);

  std::vector<std::uint8_t> ys = random_labels(rng, h * w, C);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ys[y * w + x] = 3;  // a whole thing cell
  ys[5] = kIgnoreLabel;
  PseudoLabels pl;
  pl.h = h;
  pl.w = w;
  pl.q = 0.4;
  pl.labels = random_labels(rng, h * w, C);
  std::vector<double> mix_w(h * w);
  std::vector<std::uint8_t> mix_l(h * w);
  for (int i = 0; i < h * w; ++i) {
    const bool pasted = ys[i] == 1 || ys[i] == 3;
    mix_l[i] = pasted ? ys[i] : pl.labels[i];
    mix_w[i] = pasted ? 1.0 : pl.q;
  }
  const std::vector<int> things = {1, 3};
  const PooledLabel pooled = downsample_label(ys, h, w, C, 2, 2, 0.75);
  const std::vector<std::uint8_t> mask = thing_mask(pooled, things);
  REQUIRE(std::count(mask.begin(), mask.end(), 1) >= 1);
  const double lambda = 0.005;

  enum Term { S, T, FD, ALL };
  auto build = [&](Tape<double>& t, Term term) {
    Var<double> logits = linear(t.constant(X), W1);
    Var<double> feats = linear(t.constant(Xp), W2);
    Var<double> ls = source_loss(logits, std::span<const std::uint8_t>(ys));
    Var<double> lt = cross_entropy(logits, std::span<const std::uint8_t>(mix_l), std::span<const double>(mix_w));
    Var<double> lf = fd_loss(feats, ref, mask);
    switch (term) {
      case S: return ls;
      case T: return lt;
      case FD: return scale(lf, lambda);
      default: return total_loss(ls, lt, lf, lambda);
    }
  };
  for (Term term : {S, T, FD, ALL}) {
    CAPTURE(static_cast<int>(term));
    W1.grad.setZero();
    W2.grad.setZero();
    Tape<double> t(true);
    t.backward(build(t, term));
    auto value = [&] {
      Tape<double> tv(true);
      return build(tv, term).value()(0, 0);
    };
    int checked = 0;
    if (term != FD) checked += check_grad(W1, value);
    if (term == FD || term == ALL) checked += check_grad(W2, value);
    if (term == S || term == T) CHECK(W2.grad.isZero());
    if (term == FD) CHECK(W1.grad.isZero());
    CHECK(checked >= 20);
  }
}

// ---------------------------------------------------------------------------
// train_step on a tiny model

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.encoder.widths = {8, 16, 16, 32};
  m.encoder.heads = {1, 2, 2, 4};
  m.encoder.depths = {1, 1, 1, 1};
  m.decoder.embed_channels = 16;
  m.decoder.norm_groups = 4;
  m.num_classes = 4;
  m.input_h = m.input_w = 32;
  return m;
}

std::vector<SegSample> tiny_batch(std::mt19937_64& rng, int n, bool labeled) {
  std::vector<SegSample> out;
  for (int k = 0; k < n; ++k) {
    SegSample s;
    s.h = s.w = 32;
    s.image = random_mat(rng, 32 * 32, 3, 0, 1).cast<float>();
    s.label.assign(32 * 32, 0);
    if (labeled) {
      // quadrants of classes 0..3 with a shifted split
      const int sy = 12 + 4 * k, sx = 20 - 4 * k;
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) s.label[y * 32 + x] = static_cast<std::uint8_t>((y >= sy) * 2 + (x >= sx));
    }
    s.id = static_cast<std::uint32_t>(k);
    out.push_back(std::move(s));
  }
  return out;
}

struct Fixture {
  std::mt19937_64 rng{21};
  TrainState state;
  FDReference ref;
  std::vector<SegSample> src, tgt;
  StepSettings settings;

  Fixture() {
    state.student = build_model<float>(tiny_model(), rng);
    state.teacher.model = build_model<float>(tiny_model(), rng);
    ref.config = state.student.config.encoder;
    SegModel<float> other = build_model<float>(tiny_model(), rng);
    for (auto& [k, p] : other.params)
      if (k.rfind("encoder.", 0) == 0) ref.params.add(k, p.value.rows(), p.value.cols()).value = p.value;
    src = tiny_batch(rng, 2, true);
    tgt = tiny_batch(rng, 2, false);
    settings.mode = TrainMode::uda;
    settings.uda.thing_classes = {2, 3};
    settings.uda.fd_keep_ratio = 0.25;
    settings.uda.tau = 0.3;  // 4 classes: a fresh teacher clears this on some pixels
    settings.fd = true;
    settings.lr_encoder = 1e-3;
    settings.lr_decoder = 1e-2;
  }
};

MatF full_logits(SegModel<float>& m, Tape<float>& t, const MatF& img, ForwardResult<float>* keep = nullptr) {
  ForwardResult<float> r = model_forward(m, t, img, 32, 32);
  MatF out = resize_bilinear(r.logits, 32, 32).value();
  if (keep) *keep = r;
  return out;
}

}  // namespace

TEST_CASE("train step composes the three terms") {
  Fixture f;
  TrainState before = f.state;
  std::mt19937_64 aug(1), mix(2);
  std::mt19937_64 aug2 = aug, mix2 = mix;
  const LossBundle got = train_step(f.state, &f.ref, f.src, f.tgt, f.settings, aug, mix);

  // Independent recomputation image by image on copies of the streams.
  double ls = 0, fd_sum = 0, fd_cells = 0;
  std::vector<MatF> src_img;
  for (const SegSample& s : f.src) src_img.push_back(augment(s, f.settings.aug, aug2).image);
  for (std::size_t i = 0; i < f.src.size(); ++i) {
    Tape<float> t(false);
    ForwardResult<float> r;
    const MatF z = full_logits(before.student, t, src_img[i], &r);
    ls += ce_of(z.cast<double>(), f.src[i].label) / static_cast<double>(f.src.size());

    Tape<float> tr(false);
    const FeaturePyramid<float> fr = encoder_forward(f.ref.config, f.ref.params, tr, src_img[i], 32, 32);
    const auto& b = r.features.bottleneck();
    const PooledLabel pooled =
        downsample_label(f.src[i].label, 32, 32, 4, b.h, b.w, f.settings.uda.fd_keep_ratio);
    const std::vector<std::uint8_t> m = thing_mask(pooled, f.settings.uda.thing_classes);
    const MatF d = b.value() - fr.bottleneck().value();
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (!m[j]) continue;
      fd_sum += d.row(static_cast<Eigen::Index>(j)).norm();
      fd_cells += 1;
    }
  }
  double lt = 0, q = 0;
  for (std::size_t i = 0; i < f.src.size(); ++i) {
    const PseudoLabels pl = generate_pseudo_labels(before.teacher.model, f.tgt[i].image, 32, 32, f.settings.uda);
    q += pl.q / static_cast<double>(f.src.size());
    const std::vector<int> cls = select_mix_classes(f.src[i].label, mix2);
    MixedSample m = class_mix(f.src[i].image, f.src[i].label, f.tgt[i].image, pl, cls);
    SegSample s;
    s.image = m.image;
    s.h = s.w = 32;
    const MatF img = augment(s, f.settings.aug, aug2).image;
    Tape<float> t(false);
    const MatF z = full_logits(before.student, t, img);
    const std::vector<double> wd(m.weight.begin(), m.weight.end());
    lt += ce_of(z.cast<double>(), m.label, wd) / static_cast<double>(f.src.size());
  }
  REQUIRE(fd_cells > 0);
  const double lfd = fd_sum / fd_cells;
  CHECK(got.source == doctest::Approx(ls).epsilon(1e-5));
  CHECK(got.target == doctest::Approx(lt).epsilon(1e-5));
  CHECK(got.fd == doctest::Approx(lfd).epsilon(1e-5));
  CHECK(got.q_mean == doctest::Approx(q));
  CHECK(got.target > 0);
  CHECK(got.total == doctest::Approx(ls + lt + f.settings.uda.lambda_fd * lfd).epsilon(1e-5));
  CHECK(f.state.teacher.step == 1);
}

TEST_CASE("train step updates student and teacher") {
  Fixture f;
  const TrainState before = f.state;
  std::mt19937_64 aug(1), mix(2);
  const LossBundle l = train_step(f.state, &f.ref, f.src, f.tgt, f.settings, aug, mix);
  CHECK(std::isfinite(l.total));
  double moved_s = 0, moved_t = 0;
  for (const auto& [k, p] : f.state.student.params) moved_s += (p.value - before.student.params.at(k).value).norm();
  for (const auto& [k, p] : f.state.teacher.model.params)
    moved_t += (p.value - before.teacher.model.params.at(k).value).norm();
  CHECK(moved_s > 0);
  CHECK(moved_t > 0);
  CHECK(f.state.optimizer.step == 1);

  SUBCASE("alpha 0 copies the student into the teacher") {
    f.settings.uda.alpha = 0.0;
    train_step(f.state, &f.ref, f.src, f.tgt, f.settings, aug, mix);
    for (const auto& [k, p] : f.state.teacher.model.params) CHECK(p.value == f.state.student.params.at(k).value);
  }
  SUBCASE("source-only leaves the teacher and target term alone") {
    f.settings.mode = TrainMode::source_only;
    f.settings.fd = false;
    const TrainState mid = f.state;
    const LossBundle s = train_step(f.state, nullptr, f.src, {}, f.settings, aug, mix);
    CHECK(s.target == 0.0);
    CHECK(s.fd == 0.0);
    CHECK(s.total == s.source);
    for (const auto& [k, p] : f.state.teacher.model.params) CHECK(p.value == mid.teacher.model.params.at(k).value);
  }
}

TEST_CASE("train step input checks") {
  Fixture f;
  std::mt19937_64 aug(1), mix(2);
  CHECK_THROWS_AS(train_step(f.state, nullptr, {}, {}, f.settings, aug, mix), ConfigError);
  CHECK_THROWS_AS(train_step(f.state, nullptr, f.src, std::span<const SegSample>(f.tgt).first(1), f.settings, aug, mix),
                  ConfigError);
  CHECK(train_mode_from_string("oracle") == TrainMode::oracle);
  CHECK(to_string(TrainMode::source_only) == "source_only");
  CHECK_THROWS_AS(train_mode_from_string("semi"), ConfigError);
}
