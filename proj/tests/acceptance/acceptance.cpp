// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
//
// Criteria 6-8 train the desk preset (4000 iterations, seeds 0,1,2). Runs are
// cached by config hash under --work, so a second invocation only re-reads
// the finished runs.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "daformer/experiment/config.hpp"
#include "daformer/experiment/runner.hpp"
#include "daformer/optim/optim.hpp"
#include "daformer/rcs/rcs.hpp"
#include "daformer/uda/train_step.hpp"

using namespace daformer;
namespace fs = std::filesystem;

namespace {

// Collects failures of one criterion; the first few are printed.
struct Check {
  int failed = 0;
  int total = 0;
  std::vector<std::string> notes;

  void operator()(bool ok, const std::string& what) {
    ++total;
    if (ok) return;
    ++failed;
    if (notes.size() < 5) notes.push_back(what);
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int report(int id, bool pass, const std::string& detail) {
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
  return pass ? 0 : 1;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

MatD random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

std::vector<std::uint8_t> random_labels(std::mt19937_64& rng, std::size_t n, int C) {
  std::uniform_int_distribution<int> d(0, C - 1);
  std::vector<std::uint8_t> out(n);
  for (auto& l : out) l = static_cast<std::uint8_t>(d(rng));
  return out;
}

std::string summarize_check(const Check& c) {
  std::string s = std::to_string(c.total - c.failed) + "/" + std::to_string(c.total) + " checks";
  for (const std::string& n : c.notes) s += "; " + n;
  return s;
}

// ---------------------------------------------------------------------------

int criterion1() {
  const auto t0 = Clock::now();
  Check ok;
  std::mt19937_64 rng(101);

  // RCS distribution: normalization, monotonicity, uniform symmetry
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int C = std::uniform_int_distribution<int>(2, 19)(rng);
    std::vector<double> f(C);
    double s = 0;
    for (double& v : f) s += (v = u(rng) + 1e-6);
    for (double& v : f) v /= s;
    const double T = trial % 4 == 0 ? 1e-4 : std::pow(10.0, -3.0 + 3.0 * u(rng));
    const std::vector<double> P = rcs_distribution(f, T);
    double sum = 0;
    for (double p : P) sum += p;
    ok(std::abs(sum - 1.0) <= 1e-9, "sum P = " + std::to_string(sum) + " at T=" + std::to_string(T));
    for (int a = 0; a < C; ++a)
      for (int b = 0; b < C; ++b) {
        if (!(f[a] < f[b])) continue;
        // P(b) can underflow to 0 at tiny T; the order then holds weakly
        if (P[b] > 0) ok(P[a] > P[b], "monotonicity at T=" + std::to_string(T));
        else ok(P[a] >= P[b], "monotonicity at T=" + std::to_string(T));
      }
  }
  for (int C : {2, 5, 19}) {
    const std::vector<double> f(C, 1.0 / C);
    for (double T : {1e-4, 0.01, 1.0}) {
      const std::vector<double> P = rcs_distribution(f, T);
      for (double p : P) ok(std::abs(p - 1.0 / C) <= 1e-12, "uniform f gives uniform P");
    }
  }

  // q_T against an explicit count
  for (int trial = 0; trial < 100; ++trial) {
    const MatD z = random_mat(rng, 64, 5, -4, 4);
    const double tau = 0.3 + 0.6 * u(rng);
    int count = 0;
    for (int i = 0; i < 64; ++i) {
      const double e = z.row(i).array().exp().maxCoeff() / z.row(i).array().exp().sum();
      count += e > tau;
    }
    ok(pseudo_labels_from_logits(z, 8, 8, tau).q == count / 64.0, "q_T count mismatch");
  }

  // EMA closed form
  {
    ParamStore<double> s, t;
    s.add("x", 1, 1).value(0, 0) = 0.0;
    t.add("x", 1, 1).value(0, 0) = 2.0;
    for (int i = 0; i < 100; ++i) ema_update(t, s, 0.99);
    const double want = 2.0 * std::pow(0.99, 100);
    ok(std::abs(t.at("x").value(0, 0) - want) / want < 1e-12, "EMA decay");
  }

  // label pooling and thing mask against brute force
  for (int trial = 0; trial < 50; ++trial) {
    const int C = 4;
    std::vector<std::uint8_t> l = random_labels(rng, 256, C);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if ((x / 4 + 2 * (y / 4) + trial) % 3 == 0) l[y * 16 + x] = static_cast<std::uint8_t>(trial % C);
    l[static_cast<std::size_t>(trial) % 256] = kIgnoreLabel;
    const double r = 0.1 + 0.8 * u(rng);
    const std::vector<int> things = {1, 3};
    const PooledLabel p = downsample_label(l, 16, 16, C, 4, 4, r);
    const std::vector<std::uint8_t> m = thing_mask(p, things);
    for (int cell = 0; cell < 16; ++cell) {
      const int cy = cell / 4, cx = cell % 4;
      bool thing = false;
      for (int c = 0; c < C; ++c) {
        int n = 0;
        for (int y = cy * 4; y < cy * 4 + 4; ++y)
          for (int x = cx * 4; x < cx * 4 + 4; ++x) n += l[y * 16 + x] == c;
        const bool keep = n / 16.0 > r;
        ok(p.kept(cell, c) == keep, "pooled label mismatch");
        if (keep && (c == 1 || c == 3)) thing = true;
      }
      ok((m[cell] != 0) == thing, "thing mask mismatch");
    }
  }

  // fd_loss hand cases
  {
    Tape<double> t(true);
    MatD ref(2, 2);
    ref << 1, 1, 2, 2;
    MatD f = ref;
    const std::vector<std::uint8_t> both = {1, 1}, none = {0, 0};
    ok(fd_loss(t.constant(f), ref, both).value()(0, 0) == 0.0, "fd_loss(F=ref) != 0");
    f(0, 0) += 3;
    f(1, 1) += 4;
    ok(fd_loss(t.constant(f), ref, both).value()(0, 0) == 3.5, "fd_loss norms 3,4 != 3.5");
    Var<double> v = t.variable(f);
    Var<double> l = fd_loss(v, ref, none);
    ok(l.value()(0, 0) == 0.0, "zero mask loss != 0");
    t.backward(l);
    ok(v.grad().isZero(), "zero mask gradient != 0");
  }

  const double secs = seconds_since(t0);
  ok(secs < 60.0, "runtime " + fixed(secs) + " s");
  return report(1, ok.failed == 0, summarize_check(ok) + ", " + fixed(secs) + " s");
}

// ---------------------------------------------------------------------------

int criterion2() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  const int h = 8, w = 8, C = 4, d = 8;
  const MatD X = random_mat(rng, h * w, d);
  const MatD Xp = random_mat(rng, 4, d);
  const MatD ref = random_mat(rng, 4, 6);
  Param<double> W1(d, C), W2(d, 6);
  W1.value = random_mat(rng, d, C);
  W2.value = random_mat(rng, d, 6);
  std::vector<std::uint8_t> ys = random_labels(rng, h * w, C);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ys[y * w + x] = 3;
  PseudoLabels pl;
  pl.h = h;
  pl.w = w;
  pl.q = 0.4;
  pl.labels = random_labels(rng, h * w, C);
  std::vector<double> mw(h * w);
  std::vector<std::uint8_t> ml(h * w);
  for (int i = 0; i < h * w; ++i) {
    const bool pasted = ys[i] == 1 || ys[i] == 3;
    ml[i] = pasted ? ys[i] : pl.labels[i];
    mw[i] = pasted ? 1.0 : pl.q;
  }
  const std::vector<int> things = {1, 3};
  const std::vector<std::uint8_t> mask = thing_mask(downsample_label(ys, h, w, C, 2, 2, 0.75), things);
  const double lambda = 0.005;

  enum Term { S, T, FD, ALL };
  const char* names[] = {"L_S", "L_T", "lambda*L_FD", "total"};
  auto build = [&](Tape<double>& t, Term term) {
    Var<double> logits = linear(t.constant(X), W1);
    Var<double> feats = linear(t.constant(Xp), W2);
    Var<double> ls = source_loss(logits, std::span<const std::uint8_t>(ys));
    Var<double> lt = cross_entropy(logits, std::span<const std::uint8_t>(ml), std::span<const double>(mw));
    Var<double> lf = fd_loss(feats, ref, mask);
    switch (term) {
      case S: return ls;
      case T: return lt;
      case FD: return scale(lf, lambda);
      default: return total_loss(ls, lt, lf, lambda);
    }
  };
  Check ok;
  std::string detail;
  for (Term term : {S, T, FD, ALL}) {
    W1.grad.setZero();
    W2.grad.setZero();
    Tape<double> t(true);
    t.backward(build(t, term));
    std::vector<Param<double>*> params;
    if (term != FD) params.push_back(&W1);
    if (term == FD || term == ALL) params.push_back(&W2);
    // 24 random coordinates per term
    double worst = 0;
    for (int k = 0; k < 24; ++k) {
      Param<double>& p = *params[static_cast<std::size_t>(k) % params.size()];
      const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p.value.size()));
      const double old = p.value.data()[i], step = 1e-6;
      auto value = [&] {
        Tape<double> tv(false);
        return build(tv, term).value()(0, 0);
      };
      p.value.data()[i] = old + step;
      const double lp = value();
      p.value.data()[i] = old - step;
      const double lm = value();
      p.value.data()[i] = old;
      const double fd = (lp - lm) / (2 * step), an = p.grad.data()[i];
      const double scale_ = std::max({std::abs(fd), std::abs(an), 1e-8});
      const double rel = std::abs(fd - an) / scale_;
      worst = std::max(worst, rel);
      ok(rel < 1e-3, std::string(names[term]) + " rel err " + std::to_string(rel));
    }
    detail += std::string(names[term]) + " max rel " + sci(worst) + "; ";
  }
  const double secs = seconds_since(t0);
  ok(secs < 120.0, "runtime");
  return report(2, ok.failed == 0, detail + summarize_check(ok));
}

// ---------------------------------------------------------------------------

int criterion3() {
  Check ok;
  std::mt19937_64 rng(303);
  const RunConfig preset = desk_preset();
  for (int size : {64, 96}) {
    ModelConfig mc = preset.model;
    mc.input_h = mc.input_w = size;
    SegModel<float> m = build_model<float>(mc, rng);
    Tape<float> t(false);
    const ForwardResult<float> r = model_forward(m, t, MatF(MatF::Constant(size * size, 3, 0.3f)), size, size);
    const int strides[4] = {4, 8, 16, 32};
    for (int i = 0; i < 4; ++i)
      ok(r.features.levels[i].h == size / strides[i] && r.features.levels[i].w == size / strides[i],
         "stride " + std::to_string(strides[i]) + " at " + std::to_string(size));
    ok(r.logits.h == size / 4 && r.logits.w == size / 4 && r.logits.channels() == mc.num_classes,
       "logits not at stride 4");
  }
  double attn_err = 0;
  {
    const int d = 16, heads = 2;
    ParamStore<double> p;
    for (const char* n : {"a.q", "a.k", "a.v", "a.proj"}) init::add_linear(p, n, d, d, true, rng);
    for (auto& [k, prm] : p) prm.value = random_mat(rng, prm.value.rows(), prm.value.cols());
    Tape<double> t(false);
    const FeatureMap<double> x{t.constant(random_mat(rng, 64, d)), 8, 8};
    const MatD a = efficient_self_attention(x, p, "a", heads, 1).value();
    const auto q = linear(x.v, p.at("a.q.weight"), &p.at("a.q.bias"));
    const auto k = linear(x.v, p.at("a.k.weight"), &p.at("a.k.bias"));
    const auto v = linear(x.v, p.at("a.v.weight"), &p.at("a.v.bias"));
    const MatD b = linear(multi_head_attention(q, k, v, heads), p.at("a.proj.weight"), &p.at("a.proj.bias")).value();
    attn_err = (a - b).cwiseAbs().maxCoeff();
    ok(attn_err <= 1e-6, "R=1 attention differs by " + sci(attn_err));
  }
  ModelConfig plain = preset.model;
  plain.decoder.variant = DecoderVariant::no_dsc;
  const auto n_dsc = count_parameters(build_model<float>(preset.model, rng).params, "decoder.fusion");
  const auto n_plain = count_parameters(build_model<float>(plain, rng).params, "decoder.fusion");
  ok(n_dsc < n_plain, "DSC fusion is not smaller");
  return report(3, ok.failed == 0,
                summarize_check(ok) + ", attention diff " + sci(attn_err) + ", fusion params " +
                    std::to_string(n_dsc) + " < " + std::to_string(n_plain));
}

// ---------------------------------------------------------------------------

int criterion4() {
  Check ok;
  const ScheduleConfig s = desk_preset().schedule;
  const auto E = ParamGroup::encoder, D = ParamGroup::decoder;
  ok(lr_at(s, 0, E) == 0.0 && lr_at(s, 0, D) == 0.0, "lr_at(0) != 0");
  ok(lr_at(s, s.t_warm, E) == s.base_lr(E), "lr_at(t_warm) != eta (encoder)");
  ok(lr_at(s, s.t_warm, D) == s.base_lr(D), "lr_at(t_warm) != eta (decoder)");
  ok(s.base_lr(E) == 6e-5, "encoder base lr");
  ok(std::abs(s.base_lr(D) - 6e-4) <= 1e-18, "decoder base lr");
  const double left = lr_at(s, s.t_warm - 1, E), right = lr_at(s, s.t_warm + 1, E);
  const double eta = s.base_lr(E);
  ok(std::abs(left - eta) <= eta / s.t_warm * 1.0000001 && std::abs(right - eta) <= eta / s.t_warm,
     "jump at t_warm");
  for (int t = 0; t < s.t_max; ++t) {
    const double e = lr_at(s, t, E), d = lr_at(s, t, D);
    if (e == 0.0) ok(d == 0.0, "decoder lr nonzero where encoder is 0");
    else ok(std::abs(d / e - 10.0) <= 1e-12, "ratio at t=" + std::to_string(t));
  }
  return report(4, ok.failed == 0, summarize_check(ok));
}

// ---------------------------------------------------------------------------

int criterion5() {
  Check ok;
  std::mt19937_64 rng(505);
  for (int trial = 0; trial < 100; ++trial) {
    const int C = std::uniform_int_distribution<int>(2, 6)(rng);
    std::vector<std::uint8_t> gt = random_labels(rng, 256, C), pred = random_labels(rng, 256, C);
    for (int i = 0; i < 256; i += 17) gt[i] = kIgnoreLabel;
    ConfusionMatrix cm(C);
    cm.accumulate(pred, gt);
    const IoUReport r = iou_report(cm);
    double sum = 0;
    int n = 0;
    for (int c = 0; c < C; ++c) {
      std::set<int> P, G, I, U;
      for (int i = 0; i < 256; ++i) {
        if (gt[i] == kIgnoreLabel) continue;
        if (pred[i] == c) P.insert(i);
        if (gt[i] == c) G.insert(i);
      }
      for (int i : P)
        if (G.count(i)) I.insert(i);
      U = P;
      U.insert(G.begin(), G.end());
      if (U.empty()) {
        ok(std::isnan(r.iou[c]), "empty union not NaN");
        continue;
      }
      const double iou = static_cast<double>(I.size()) / static_cast<double>(U.size());
      ok(r.iou[c] == iou, "IoU mismatch");
      sum += iou;
      ++n;
    }
    ok(r.miou == sum / n, "mIoU mismatch");
  }
  const double a = std::round(10 * relative_performance(54.2, 72.1)) / 10;
  const double b = std::round(10 * relative_performance(58.2, 76.4)) / 10;
  ok(a == 75.2, "rel 54.2/72.1 = " + std::to_string(a));
  ok(b == 76.2, "rel 58.2/76.4 = " + std::to_string(b));
  return report(5, ok.failed == 0, summarize_check(ok) + ", Rel " + fixed(a, 1) + " / " + fixed(b, 1));
}

// ---------------------------------------------------------------------------
// Experiments

struct Experiments {
  fs::path work;
  std::vector<std::uint64_t> seeds;
  RunConfig base;

  RunConfig config(const std::string& name, std::uint64_t seed) const {
    RunConfig c = base;
    c.seed = seed;
    c.out_dir = (work / name / ("seed" + std::to_string(seed))).string();
    return c;
  }

  RunResult run(const std::string& name, std::uint64_t seed, const std::function<void(RunConfig&)>& edit) const {
    RunConfig c = config(name, seed);
    edit(c);
    std::cerr << "[acceptance] " << name << " seed " << seed << " (" << config_hash(c) << ")" << std::endl;
    return run_cached(c, &std::cerr);
  }
};

const auto uda_mode = [](RunConfig& c) { c.mode = TrainMode::uda; };
const auto source_mode = [](RunConfig& c) { c.mode = TrainMode::source_only; };
const auto rcs_mode = [](RunConfig& c) {
  c.mode = TrainMode::uda;
  c.rcs.enabled = true;
};
const auto fd_mode = [](RunConfig& c) {
  c.mode = TrainMode::uda;
  c.fd = true;
};

double mean_of(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

std::string list(const std::vector<double>& x) {
  std::string s = "[";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? " " : "") + fixed(x[i], 1);
  return s + "]";
}

std::vector<int> class_ids(const DatasetSpec& spec, std::initializer_list<const char*> names) {
  std::vector<int> ids;
  for (const char* n : names)
    for (int c = 0; c < spec.num_classes(); ++c)
      if (spec.classes[c].name == n) ids.push_back(c);
  return ids;
}

// First evaluated iteration at which the mean IoU over `classes` exceeds
// 10%; +inf when it never does.
double first_crossing(const RunResult& r, std::span<const int> classes) {
  for (const EvalPoint& e : r.history) {
    IoUReport rep;
    rep.iou = e.iou;
    rep.included.resize(e.iou.size());
    for (std::size_t c = 0; c < e.iou.size(); ++c) rep.included[c] = !std::isnan(e.iou[c]);
    const double m = mean_iou_over(rep, classes);
    if (!std::isnan(m) && m > 0.10) return e.iteration;
  }
  return std::numeric_limits<double>::infinity();
}

double class_mean(const RunResult& r, std::span<const int> classes) {
  const double m = mean_iou_over(r.final_report, classes);
  return std::isnan(m) ? 0.0 : 100.0 * m;
}

int criterion6(const Experiments& ex) {
  std::vector<double> uda, src;
  for (std::uint64_t s : ex.seeds) {
    uda.push_back(100.0 * ex.run("uda", s, uda_mode).final_report.miou);
    src.push_back(100.0 * ex.run("source_only", s, source_mode).final_report.miou);
  }
  const double gap = mean_of(uda) - mean_of(src);
  return report(6, gap >= 5.0,
                "UDA " + list(uda) + " mean " + fixed(mean_of(uda)) + " vs source-only " + list(src) + " mean " +
                    fixed(mean_of(src)) + ", gain " + fixed(gap) + " (need >= 5)");
}

int criterion7(const Experiments& ex) {
  const std::vector<int> rare = class_ids(ex.base.dataset, {"star", "cross"});
  int better = 0, earlier = 0;
  std::vector<double> with, without, t_with, t_without;
  for (std::uint64_t s : ex.seeds) {
    const RunResult a = ex.run("uda_rcs", s, rcs_mode);
    const RunResult b = ex.run("uda", s, uda_mode);
    with.push_back(class_mean(a, rare));
    without.push_back(class_mean(b, rare));
    t_with.push_back(first_crossing(a, rare));
    t_without.push_back(first_crossing(b, rare));
    if (with.back() - without.back() >= 3.0) ++better;
    if (t_with.back() < t_without.back()) ++earlier;
  }
  const int n = static_cast<int>(ex.seeds.size());
  const int need_n = n == 3 ? 2 : (n + 1) / 2;
  return report(7, better >= need_n && earlier >= need_n,
                "rare IoU with RCS " + list(with) + " without " + list(without) + " (+3 in " +
                    std::to_string(better) + " seeds); first >10% at " + list(t_with) + " vs " + list(t_without) +
                    " (earlier in " + std::to_string(earlier) + " seeds); need " + std::to_string(need_n));
}

int criterion8(const Experiments& ex) {
  const std::vector<int> things = ex.base.dataset.thing_classes();
  int better = 0, anchored = 0;
  std::vector<double> with, without, d0, d1000;
  for (std::uint64_t s : ex.seeds) {
    const RunResult a = ex.run("uda_fd", s, fd_mode);
    const RunResult b = ex.run("uda", s, uda_mode);
    with.push_back(class_mean(a, things));
    without.push_back(class_mean(b, things));
    if (with.back() - without.back() >= 2.0) ++better;
    double at0 = std::nan(""), at1000 = std::nan("");
    for (const EvalPoint& e : a.history)
      if (e.iteration == 0) at0 = e.fd_distance;
    for (const EvalPoint& e : b.history)
      if (e.iteration == 1000) at1000 = e.fd_distance;
    d0.push_back(at0);
    d1000.push_back(at1000);
    if (at0 < at1000) ++anchored;
  }
  const int n = static_cast<int>(ex.seeds.size());
  const int need_n = n == 3 ? 2 : (n + 1) / 2;
  return report(8, better >= need_n && anchored == n,
                "thing IoU with FD " + list(with) + " without " + list(without) + " (+2 in " +
                    std::to_string(better) + " seeds, need " + std::to_string(need_n) + "); distance FD@0 " +
                    list(d0) + " < no-FD@1000 " + list(d1000) + " in " + std::to_string(anchored) + " seeds");
}

// ---------------------------------------------------------------------------

RunConfig tiny_config(const fs::path& out) {
  RunConfig c = desk_preset();
  c.dataset.height = c.dataset.width = 32;
  c.dataset.num_source = 24;
  c.dataset.num_target = 24;
  c.dataset.num_target_val = 8;
  c.dataset.thing_radius_min = 3;
  c.dataset.thing_radius_max = 7;
  c.augmentation.crop_h = c.augmentation.crop_w = 32;
  c.model.input_h = c.model.input_w = 32;
  c.model.encoder.widths = {8, 16, 16, 32};
  c.model.encoder.heads = {1, 2, 2, 4};
  c.model.encoder.depths = {1, 1, 1, 1};
  c.model.decoder.embed_channels = 16;
  c.model.decoder.norm_groups = 4;
  c.schedule.t_warm = 2;
  c.schedule.t_max = 12;
  c.eval_interval = 6;
  c.pretrain.enabled = false;
  c.rcs.enabled = true;
  c.out_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int criterion9(const fs::path& work) {
  Check ok;
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  RunConfig a = tiny_config(dir / "a");
  RunConfig b = tiny_config(dir / "b");
  const RunResult ra = run(a);
  run(b);
  const std::string ta = slurp(dir / "a" / "trace.csv");
  ok(!ta.empty() && ta == slurp(dir / "b" / "trace.csv"), "traces differ");
  LoadedRun loaded = load_run_checkpoint(dir / "a" / "checkpoint.ckpt");
  const GeneratedDataset data = generate_dataset(loaded.config.dataset);
  const double m = iou_report(evaluate(loaded.student, data.target_val)).miou;
  ok(m == ra.final_report.miou, "reloaded mIoU " + std::to_string(m) + " vs " + std::to_string(ra.final_report.miou));
  return report(9, ok.failed == 0, summarize_check(ok) + ", mIoU after reload " + std::to_string(100 * m));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = "acceptance_runs";
  std::string only;
  std::string config_path;
  app.add_option("--work", work, "Directory for cached runs and shared caches");
  app.add_option("--only", only, "Comma-separated criterion ids to run (default all)");
  app.add_option("--config", config_path, "Base config for criteria 6-8 (default desk preset)");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  if (only.empty()) {
    for (int i = 1; i <= 9; ++i) selected.insert(i);
  } else {
    std::stringstream ss(only);
    std::string tok;
    while (std::getline(ss, tok, ',')) selected.insert(std::stoi(tok));
  }

  const fs::path w = fs::absolute(work);
  fs::create_directories(w);
  Experiments ex;
  ex.work = w;
  ex.seeds = {0, 1, 2};
  ex.base = config_path.empty() ? desk_preset() : load_run_config(config_path);
  if (ex.base.dataset_cache.empty()) ex.base.dataset_cache = (w / "cache" / "data").string();
  if (ex.base.pretrain_cache.empty()) ex.base.pretrain_cache = (w / "cache" / "pretrain").string();

  int failures = 0;
  const std::vector<std::function<int()>> checks = {
      criterion1, criterion2, criterion3, criterion4, criterion5, [&] { return criterion6(ex); },
      [&] { return criterion7(ex); }, [&] { return criterion8(ex); }, [&] { return criterion9(w); }};
  for (int i = 1; i <= 9; ++i) {
    if (!selected.count(i)) continue;
    try {
      failures += checks[static_cast<std::size_t>(i - 1)]();
    } catch (const std::exception& e) {
      failures += report(i, false, std::string("error: ") + e.what());
    }
  }
  return failures == 0 ? 0 : 1;
}
