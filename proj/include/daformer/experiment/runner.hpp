#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "daformer/eval/metrics.hpp"
#include "daformer/experiment/config.hpp"
#include "daformer/network/model.hpp"

namespace daformer {

/// Confusion matrix of the model's full-resolution argmax over `samples`.
ConfusionMatrix evaluate(SegModel<float>& model, std::span<const SegSample> samples);

struct EvalPoint {
  int iteration = 0;
  std::vector<double> iou;  // NaN for classes absent from prediction and truth
  double miou = 0.0;
  /// Bottleneck distance to the frozen reference on the probe images; NaN
  /// without a reference.
  double fd_distance = 0.0;
};

struct RunResult {
  std::string config_hash;
  IoUReport final_report;
  std::vector<EvalPoint> history;
  double rcs_temperature = 0.0;
  int iterations_run = 0;
};

struct RunOptions {
  /// Continue from <out>/checkpoint.ckpt when its config hash matches.
  bool resume = false;
  /// Stop after this many iterations (checkpointing first); -1 runs to t_max.
  int stop_after = -1;
  std::ostream* log = nullptr;
};

/// Trains one configuration and writes into cfg.out_dir:
///   config.json   config snapshot with its hash
///   metrics.csv   iter,L_S,L_T,L_FD,q_mean,lr_encoder,lr_decoder
///   eval.csv      iter,mIoU,<class IoUs>,fd_distance (IoUs in %)
///   trace.csv     iter,source_ids,source_classes,target_ids
///   report.csv    final per-class IoU table
///   metrics.json  summary including the config hash
///   checkpoint.ckpt
RunResult run(const RunConfig& cfg, const RunOptions& opts = {});

/// Reads metrics.json of a finished run whose config hash matches, else runs.
RunResult run_cached(const RunConfig& cfg, std::ostream* log = nullptr);

/// Model and the run's dataset restored from a checkpoint written by run().
struct LoadedRun {
  RunConfig config;
  SegModel<float> student;
  int iteration = 0;
};
LoadedRun load_run_checkpoint(const std::filesystem::path& path);

struct AblationVariant {
  std::string name;
  RunConfig config;
};

/// no_warmup, warmup, rcs, fd, rcs_fd, rcs_fd_crop_alpha; all in UDA mode.
std::vector<AblationVariant> ablation_variants(const RunConfig& base);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double miou = 0.0;
};

struct AblationSummary {
  std::string variant;
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

/// Sample mean and (n-1)-normalized standard deviation per variant, in
/// first-appearance order.
std::vector<AblationSummary> summarize(std::span<const AblationRow> rows);

/// Runs every variant for every seed below <base.out_dir>/<variant>/seed<k>
/// and writes ablation_runs.csv and ablation_summary.csv (mIoU in %).
std::vector<AblationSummary> ablation_suite(const RunConfig& base, std::span<const std::uint64_t> seeds,
                                            std::ostream* log = nullptr);

}  // namespace daformer
