// Command-line front end: train, eval, stats, ablate, plot, generate.
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "daformer/core/random.hpp"
#include "daformer/experiment/checkpoint.hpp"
#include "daformer/experiment/plot.hpp"
#include "daformer/experiment/runner.hpp"
#include "daformer/rcs/rcs.hpp"

namespace fs = std::filesystem;
using namespace daformer;

namespace {

RunConfig config_or_preset(const std::string& path) { return path.empty() ? desk_preset() : load_run_config(path); }

void write_stats_csv(std::ostream& os, const DatasetSpec& spec, const ClassStats& stats, double temperature) {
  const std::vector<double> p = rcs_class_distribution(stats, temperature);
  os << "class,name,kind,pixels,f,images,P\n";
  os << std::setprecision(10);
  for (int c = 0; c < stats.num_classes(); ++c) {
    const ClassDef& d = spec.classes[static_cast<std::size_t>(c)];
    os << c << ',' << d.name << ',' << to_string(d.kind) << ',' << stats.pixel_counts[c] << ',' << stats.f[c] << ','
       << stats.class_index[c].size() << ',' << p[c] << '\n';
  }
}

int cmd_train(const std::string& config, const std::string& mode, std::uint64_t seed, const std::string& out,
              bool resume, int stop_after) {
  RunConfig cfg = config_or_preset(config);
  if (!mode.empty()) cfg.mode = train_mode_from_string(mode);
  cfg.seed = seed;
  cfg.out_dir = out;
  RunOptions opts;
  opts.resume = resume;
  opts.stop_after = stop_after;
  opts.log = &std::cerr;
  const RunResult r = run(cfg, opts);
  std::cout << "config_hash " << r.config_hash << "\n"
            << "iterations " << r.iterations_run << "\n"
            << "mIoU " << std::fixed << std::setprecision(2) << 100.0 * r.final_report.miou << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& split_name, const std::string& out) {
  LoadedRun lr = load_run_checkpoint(ckpt);
  const Split split = split_from_string(split_name);
  const DatasetSpec& spec = lr.config.dataset;
  const GeneratedDataset data = lr.config.dataset_cache.empty()
                                    ? generate_dataset(spec)
                                    : load_or_generate(lr.config.dataset_cache, spec);
  const std::vector<SegSample>& samples =
      split == Split::source_train ? data.source : (split == Split::target_train ? data.target : data.target_val);
  const IoUReport rep = iou_report(evaluate(lr.student, samples));
  std::vector<std::string> names;
  for (const ClassDef& d : spec.classes) names.push_back(d.name);
  write_report_csv(std::cout, rep, names);
  if (!out.empty()) {
    std::ofstream os(out);
    write_report_csv(os, rep, names);
  }
  return 0;
}

int cmd_stats(const std::string& dataset, const std::string& config, const std::string& temperature,
              const std::string& out) {
  DatasetSpec spec;
  GeneratedDataset data;
  if (!dataset.empty()) {
    LoadedDataset ld = load_dataset(dataset);
    spec = std::move(ld.spec);
    data = std::move(ld.data);
  } else {
    spec = config_or_preset(config).dataset;
    data.source = generate_split(spec, Split::source_train);
  }
  const ClassStats stats = compute_class_frequencies(std::span<const SegSample>(data.source), spec.num_classes());
  double t = 0.0;
  if (temperature == "auto") {
    const RunConfig base = desk_preset();
    t = choose_temperature(stats, base.rcs_candidates, 20000, derive_seed(spec.seed, {2, 99}));
  } else {
    t = std::stod(temperature);
  }
  std::cerr << "temperature " << t << "\n";
  if (out.empty()) {
    write_stats_csv(std::cout, spec, stats, t);
  } else {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    std::ofstream os(out);
    write_stats_csv(os, spec, stats, t);
  }
  return 0;
}

int cmd_generate(const std::string& config, const std::string& out) {
  const DatasetSpec spec = config_or_preset(config).dataset;
  save_dataset(out, spec, generate_dataset(spec));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_ablate(const std::string& config, const std::vector<std::uint64_t>& seeds, const std::string& out) {
  RunConfig cfg = config_or_preset(config);
  if (!out.empty()) cfg.out_dir = out;
  if (cfg.out_dir.empty()) cfg.out_dir = "ablation";
  const std::vector<AblationSummary> rows = ablation_suite(cfg, seeds, &std::cerr);
  std::cout << "variant,mean,sd,n\n" << std::fixed << std::setprecision(2);
  for (const AblationSummary& s : rows) std::cout << s.variant << ',' << s.mean << ',' << s.sd << ',' << s.n << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-adaptive segmentation on ShapeWorld"};
  app.require_subcommand(1);

  std::string config, mode, out, ckpt, split = "target_val", dataset, temperature = "auto", kind, column;
  std::uint64_t seed = 0;
  bool resume = false;
  int stop_after = -1;
  std::vector<std::string> inputs;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  CLI::App* train = app.add_subcommand("train", "Train one configuration");
  train->add_option("--config", config, "JSON run config (default: desk preset)");
  train->add_option("--mode", mode, "source_only, uda or oracle");
  train->add_option("--seed", seed, "Master seed");
  train->add_option("--out", out, "Output directory")->required();
  train->add_flag("--resume", resume, "Continue from <out>/checkpoint.ckpt");
  train->add_option("--stop-after", stop_after, "Stop (and checkpoint) after this many iterations");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt, "Checkpoint written by train")->required();
  eval->add_option("--split", split, "source_train, target_train or target_val");
  eval->add_option("--out", out, "Also write the report CSV here");

  CLI::App* stats = app.add_subcommand("stats", "Per-class frequency f_c and RCS probability P(c) as CSV");
  stats->add_option("--dataset", dataset, "Dataset directory written by generate");
  stats->add_option("--config", config, "Generate the source split of this config instead");
  stats->add_option("--temperature", temperature, "RCS temperature or 'auto'");
  stats->add_option("--out", out, "Output CSV (default stdout)");

  CLI::App* ablate = app.add_subcommand("ablate", "Component ablation over several seeds");
  ablate->add_option("--config", config, "Base JSON run config");
  ablate->add_option("--seeds", seeds, "Seeds")->delimiter(',');
  ablate->add_option("--out", out, "Output root (default: config out_dir)");

  CLI::App* plot = app.add_subcommand("plot", "SVG plots");
  plot->add_option("--kind", kind, "iou_curve, class_stats or p_of_c")->required();
  plot->add_option("--in", inputs, "Input CSV files")->required();
  plot->add_option("--out", out, "Output SVG")->required();
  plot->add_option("--column", column, "Curve column for iou_curve (default mIoU)");

  CLI::App* generate = app.add_subcommand("generate", "Write the dataset of a config to disk");
  generate->add_option("--config", config, "JSON run config (default: desk preset)");
  generate->add_option("--out", out, "Dataset directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config, mode, seed, out, resume, stop_after);
    if (*eval) return cmd_eval(ckpt, split, out);
    if (*stats) return cmd_stats(dataset, config, temperature, out);
    if (*ablate) return cmd_ablate(config, seeds, out);
    if (*plot) {
      make_plot(kind, inputs, out, column);
      return 0;
    }
    if (*generate) return cmd_generate(config, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
