#include "daformer/rcs/rcs.hpp"

#include <algorithm>
#include <cmath>

#include "daformer/core/errors.hpp"

namespace daformer {

void RCSConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("rcs: temperature must be positive");
}

ClassStats compute_class_frequencies(std::span<const std::vector<std::uint8_t>> labels, int num_classes) {
  if (labels.empty()) throw ConfigError("class statistics of an empty dataset");
  if (num_classes <= 0) throw ConfigError("class statistics need C > 0");
  ClassStats s;
  s.f.assign(num_classes, 0.0);
  s.class_index.assign(num_classes, {});
  s.pixel_counts.assign(num_classes, 0);
  s.sample_pixels.reserve(labels.size());
  std::uint64_t counted = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<std::uint32_t> px(num_classes, 0);
    for (std::uint8_t l : labels[i]) {
      if (l == kIgnoreLabel) continue;
      if (l >= num_classes) throw ShapeError("label value out of range in class statistics");
      ++px[l];
    }
    for (int c = 0; c < num_classes; ++c) {
      if (px[c] == 0) continue;
      s.pixel_counts[c] += px[c];
      counted += px[c];
      s.class_index[c].push_back(static_cast<std::uint32_t>(i));
    }
    s.sample_pixels.push_back(std::move(px));
  }
  if (counted > 0)
    for (int c = 0; c < num_classes; ++c) s.f[c] = static_cast<double>(s.pixel_counts[c]) / counted;
  return s;
}

ClassStats compute_class_frequencies(std::span<const SegSample> samples, int num_classes) {
  std::vector<std::vector<std::uint8_t>> labels;
  labels.reserve(samples.size());
  for (const SegSample& s : samples) labels.push_back(s.label);
  return compute_class_frequencies(std::span<const std::vector<std::uint8_t>>(labels), num_classes);
}

std::vector<double> rcs_distribution(std::span<const double> f, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("rcs: temperature must be positive");
  if (f.empty()) return {};
  std::vector<double> logit(f.size());
  for (std::size_t c = 0; c < f.size(); ++c) logit[c] = (1.0 - f[c]) / temperature;
  const double m = *std::max_element(logit.begin(), logit.end());
  double z = 0.0;
  for (double& v : logit) z += (v = std::exp(v - m));
  for (double& v : logit) v /= z;
  return logit;
}

std::vector<double> rcs_class_distribution(const ClassStats& stats, double temperature) {
  std::vector<double> f_present;
  std::vector<int> present;
  for (int c = 0; c < stats.num_classes(); ++c) {
    if (stats.class_index[c].empty()) continue;
    present.push_back(c);
    f_present.push_back(stats.f[c]);
  }
  if (present.empty()) throw ConfigError("rcs: no class has any sample");
  const std::vector<double> p = rcs_distribution(f_present, temperature);
  std::vector<double> out(stats.num_classes(), 0.0);
  for (std::size_t i = 0; i < present.size(); ++i) out[present[i]] = p[i];
  return out;
}

namespace {

int draw_class(const std::vector<double>& p, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = -1;
  for (int c = 0; c < static_cast<int>(p.size()); ++c) {
    if (p[c] <= 0.0) continue;
    last = c;
    acc += p[c];
    if (u < acc) return c;
  }
  return last;
}

RCSDraw draw(const ClassStats& stats, const std::vector<double>& p, std::mt19937_64& rng) {
  RCSDraw d;
  d.cls = draw_class(p, rng);
  const auto& ids = stats.class_index[d.cls];
  d.sample = ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)];
  return d;
}

}  // namespace

RCSDraw sample_source(const ClassStats& stats, const RCSConfig& cfg, std::mt19937_64& rng) {
  if (stats.num_samples() == 0) throw ConfigError("rcs: no samples");
  if (!cfg.enabled) {
    RCSDraw d;
    d.sample = static_cast<std::uint32_t>(
        std::uniform_int_distribution<std::size_t>(0, stats.num_samples() - 1)(rng));
    return d;
  }
  cfg.validate();
  return draw(stats, rcs_class_distribution(stats, cfg.temperature), rng);
}

std::vector<double> expected_resampled_pixels(const ClassStats& stats, double temperature) {
  const std::vector<double> p = rcs_class_distribution(stats, temperature);
  const int C = stats.num_classes();
  std::vector<double> e(C, 0.0);
  for (int k = 0; k < C; ++k) {
    if (p[k] <= 0.0) continue;
    const auto& ids = stats.class_index[k];
    for (int c = 0; c < C; ++c) {
      double mean = 0.0;
      for (std::uint32_t s : ids) mean += stats.sample_pixels[s][c];
      e[c] += p[k] * mean / static_cast<double>(ids.size());
    }
  }
  return e;
}

std::vector<double> estimate_resampled_pixels(const ClassStats& stats, double temperature, int trials,
                                              std::uint64_t seed) {
  if (trials < 1) throw ConfigError("rcs: trials must be >= 1");
  const std::vector<double> p = rcs_class_distribution(stats, temperature);
  std::mt19937_64 rng(seed);
  std::vector<double> sum(stats.num_classes(), 0.0);
  for (int t = 0; t < trials; ++t) {
    const RCSDraw d = draw(stats, p, rng);
    for (int c = 0; c < stats.num_classes(); ++c) sum[c] += stats.sample_pixels[d.sample][c];
  }
  for (double& v : sum) v /= trials;
  return sum;
}

double choose_temperature(const ClassStats& stats, std::span<const double> candidates, int trials,
                          std::uint64_t seed) {
  if (candidates.empty()) throw ConfigError("rcs: empty temperature candidate list");
  for (double t : candidates)
    if (!(t > 0.0)) throw ConfigError("rcs: temperature candidates must be positive");
  double best_t = 0.0, best_score = -1.0;
  for (double t : candidates) {
    const std::vector<double> e = estimate_resampled_pixels(stats, t, trials, seed);
    double worst = std::numeric_limits<double>::infinity();
    for (int c = 0; c < stats.num_classes(); ++c)
      if (!stats.class_index[c].empty()) worst = std::min(worst, e[c]);
    if (worst > best_score || (worst == best_score && t < best_t)) {
      best_score = worst;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace daformer
