#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "daformer/data/shapeworld.hpp"

namespace daformer {

/// Source class statistics. Sample ids are positions in the label list the
/// statistics were computed from.
struct ClassStats {
  std::vector<double> f;
  std::vector<std::vector<std::uint32_t>> class_index;
  std::vector<std::uint64_t> pixel_counts;
  /// Per-sample per-class pixel counts, [sample][class].
  std::vector<std::vector<std::uint32_t>> sample_pixels;

  int num_classes() const { return static_cast<int>(f.size()); }
  std::size_t num_samples() const { return sample_pixels.size(); }
};

struct RCSConfig {
  double temperature = 0.01;
  bool enabled = true;

  void validate() const;
};

/// Throws ConfigError on an empty list or C <= 0. Label values >= C other
/// than IGNORE raise ShapeError.
ClassStats compute_class_frequencies(std::span<const std::vector<std::uint8_t>> labels, int num_classes);
ClassStats compute_class_frequencies(std::span<const SegSample> samples, int num_classes);

/// P(c) = softmax((1 - f_c) / T), computed with max-subtraction.
std::vector<double> rcs_distribution(std::span<const double> f, double temperature);

/// rcs_distribution restricted to classes that have at least one sample;
/// other classes get probability 0.
std::vector<double> rcs_class_distribution(const ClassStats& stats, double temperature);

struct RCSDraw {
  int cls = -1;  // -1 when RCS is disabled
  std::uint32_t sample = 0;
};

/// Draws c ~ P with one uniform variate (inverse CDF), then a sample uniform
/// over class_index[c]. Disabled RCS draws one sample uniform over all ids.
RCSDraw sample_source(const ClassStats& stats, const RCSConfig& cfg, std::mt19937_64& rng);

/// Expected pixels of each class per draw, computed exactly from P(c) and
/// the per-sample counts.
std::vector<double> expected_resampled_pixels(const ClassStats& stats, double temperature);

/// Monte Carlo estimate of the per-class re-sampled pixels per draw for
/// one temperature. Every candidate replays the same random stream.
std::vector<double> estimate_resampled_pixels(const ClassStats& stats, double temperature, int trials,
                                              std::uint64_t seed);

/// Returns the candidate maximizing the minimum (over classes present in
/// the data) of the re-sampled pixels per draw. Ties go to the smallest T.
double choose_temperature(const ClassStats& stats, std::span<const double> candidates, int trials,
                          std::uint64_t seed);

}  // namespace daformer
