#include "daformer/experiment/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "daformer/core/errors.hpp"
#include "daformer/core/random.hpp"
#include "daformer/experiment/checkpoint.hpp"
#include "daformer/experiment/pretrain.hpp"
#include "daformer/rcs/rcs.hpp"
#include "daformer/uda/train_step.hpp"

namespace daformer {

namespace fs = std::filesystem;
using nlohmann::json;

ConfusionMatrix evaluate(SegModel<float>& model, std::span<const SegSample> samples) {
  ConfusionMatrix cm(model.config.num_classes);
  for (const SegSample& s : samples) {
    const std::vector<std::uint8_t> pred = argmax_labels(predict_logits(model, s.image, s.h, s.w));
    cm.accumulate(pred, s.label);
  }
  return cm;
}

namespace {

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void restore_rng(std::mt19937_64& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw FormatError("corrupt RNG state in checkpoint");
}

/// Keeps the header and the rows whose first field is <= max_iter.
void truncate_csv(const fs::path& path, int max_iter) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      keep.push_back(line);
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoi(line.substr(0, line.find(','))) <= max_iter) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

std::vector<EvalPoint> read_eval_csv(const fs::path& path, int num_classes) {
  std::vector<EvalPoint> out;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    EvalPoint e;
    std::getline(ss, cell, ',');
    e.iteration = std::stoi(cell);
    std::getline(ss, cell, ',');
    e.miou = std::stod(cell) / 100.0;
    for (int c = 0; c < num_classes; ++c) {
      std::getline(ss, cell, ',');
      e.iou.push_back(cell == "nan" ? std::nan("") : std::stod(cell) / 100.0);
    }
    std::getline(ss, cell, ',');
    e.fd_distance = cell == "nan" ? std::nan("") : std::stod(cell);
    out.push_back(std::move(e));
  }
  return out;
}

std::string join_ids(const std::vector<long>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(8) << v;
  return os.str();
}

json report_json(const IoUReport& r, const DatasetSpec& spec) {
  json per = json::object();
  for (int c = 0; c < spec.num_classes(); ++c)
    per[spec.classes[c].name] = r.included[c] ? json(r.iou[c]) : json(nullptr);
  return json{{"miou", r.miou}, {"iou", per}};
}

Checkpoint make_checkpoint(const RunConfig& cfg, const std::string& hash, const TrainState& st, int iteration,
                           double rcs_t, const std::mt19937_64& rcs_rng, const std::mt19937_64& target_rng,
                           const std::mt19937_64& aug_rng, const std::mt19937_64& mix_rng) {
  Checkpoint ck;
  ck.meta = {{"config", to_json(cfg)},
             {"config_hash", hash},
             {"iteration", iteration},
             {"rcs_temperature", rcs_t},
             {"teacher_step", st.teacher.step},
             {"optimizer_step", st.optimizer.step},
             {"rng", {{"rcs", rng_state(rcs_rng)},
                      {"target", rng_state(target_rng)},
                      {"augmentation", rng_state(aug_rng)},
                      {"mixing", rng_state(mix_rng)}}}};
  pack_params(ck, "student", st.student.params);
  pack_params(ck, "teacher", st.teacher.model.params);
  for (const auto& [key, m] : st.optimizer.moments) {
    ck.arrays["adam_m/" + key] = m.m;
    ck.arrays["adam_v/" + key] = m.v;
  }
  return ck;
}

}  // namespace

RunResult run(const RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (cfg.out_dir.empty()) throw ConfigError("run: out_dir is empty");
  if (cfg.fd && !cfg.pretrain.enabled) throw ConfigError("run: FD needs the pretrained reference encoder");
  std::ostream* log = opts.log;
  const auto t_start = std::chrono::steady_clock::now();
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const std::string hash = config_hash(cfg);
  const int C = cfg.dataset.num_classes();

  GeneratedDataset data =
      load_or_generate(cfg.dataset_cache.empty() ? fs::path() : fs::path(cfg.dataset_cache), cfg.dataset);
  const bool oracle = cfg.mode == TrainMode::oracle;
  const std::vector<SegSample>& labeled_pool = oracle ? data.target : data.source;
  const ClassStats stats = compute_class_frequencies(std::span<const SegSample>(labeled_pool), C);

  RCSConfig rcs = cfg.rcs;
  if (oracle) rcs.enabled = false;
  if (rcs.enabled && cfg.rcs_auto_temperature)
    rcs.temperature = choose_temperature(stats, cfg.rcs_candidates, 20000, derive_seed(cfg.seed, {2, 99}));

  // Model initialization: encoder from the proxy pretraining when enabled.
  std::mt19937_64 init_rng = make_stream(cfg.seed, Stream::init);
  TrainState st{build_model<float>(cfg.model, init_rng), {}, {}};
  std::optional<FDReference> reference;
  if (cfg.pretrain.enabled) {
    reference = load_or_pretrain(cfg.pretrain_cache.empty() ? fs::path() : fs::path(cfg.pretrain_cache),
                                 cfg.model.encoder, cfg.dataset, cfg.pretrain, log);
    for (auto& [key, p] : reference->params) st.student.params.at(key).value = p.value;
  }
  st.teacher.model = st.student;

  std::mt19937_64 rcs_rng = make_stream(cfg.seed, Stream::rcs);
  std::mt19937_64 target_rng = make_stream(cfg.seed, Stream::target);
  std::mt19937_64 aug_rng = make_stream(cfg.seed, Stream::augmentation);
  std::mt19937_64 mix_rng = make_stream(cfg.seed, Stream::mixing);

  const fs::path ckpt_path = out / "checkpoint.ckpt";
  int start = 0;
  if (opts.resume && fs::exists(ckpt_path)) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    if (ck.meta.value("config_hash", "") != hash) throw StateError("checkpoint belongs to a different config");
    start = ck.meta.at("iteration").get<int>();
    unpack_params(ck, "student", st.student.params);
    unpack_params(ck, "teacher", st.teacher.model.params);
    st.teacher.step = ck.meta.at("teacher_step").get<long>();
    st.optimizer.step = ck.meta.at("optimizer_step").get<long>();
    for (const auto& [key, p] : st.student.params) {
      auto im = ck.arrays.find("adam_m/" + key);
      auto iv = ck.arrays.find("adam_v/" + key);
      if (im == ck.arrays.end() || iv == ck.arrays.end()) continue;
      st.optimizer.moments[key] = {im->second, iv->second};
    }
    rcs.temperature = ck.meta.at("rcs_temperature").get<double>();
    const json& r = ck.meta.at("rng");
    restore_rng(rcs_rng, r.at("rcs").get<std::string>());
    restore_rng(target_rng, r.at("target").get<std::string>());
    restore_rng(aug_rng, r.at("augmentation").get<std::string>());
    restore_rng(mix_rng, r.at("mixing").get<std::string>());
    for (const char* f : {"metrics.csv", "eval.csv", "trace.csv"}) truncate_csv(out / f, start);
    if (log) *log << "resumed at iteration " << start << "\n";
  }

  {
    json snap = to_json(cfg);
    snap["config_hash"] = hash;
    snap["rcs"]["effective_temperature"] = rcs.temperature;
    std::ofstream(out / "config.json") << snap.dump(2) << "\n";
  }
  const auto mode = start > 0 ? std::ios::app : std::ios::trunc;
  std::ofstream metrics(out / "metrics.csv", mode), eval_csv(out / "eval.csv", mode), trace(out / "trace.csv", mode);
  if (start == 0) {
    metrics << "iter,L_S,L_T,L_FD,q_mean,lr_encoder,lr_decoder\n";
    eval_csv << "iter,mIoU";
    for (const ClassDef& c : cfg.dataset.classes) eval_csv << ',' << c.name;
    eval_csv << ",fd_distance\n";
    trace << "iter,source_ids,source_classes,target_ids\n";
  }

  const std::size_t probe_n = std::min<std::size_t>(cfg.fd_probe_samples, data.source.size());
  const std::span<const SegSample> probe(data.source.data(), probe_n);
  RunResult result;
  result.config_hash = hash;
  result.rcs_temperature = rcs.temperature;
  IoUReport last_report;
  auto do_eval = [&](int iteration) {
    const IoUReport rep = iou_report(evaluate(st.student, data.target_val));
    last_report = rep;
    EvalPoint e;
    e.iteration = iteration;
    e.iou = rep.iou;
    e.miou = rep.miou;
    e.fd_distance = reference && probe_n > 0 ? measure_feature_distance(st.student, *reference, probe, cfg.uda)
                                              : std::nan("");
    eval_csv << iteration << ',' << fmt(100.0 * e.miou);
    for (double v : e.iou) eval_csv << ',' << fmt(100.0 * v);
    eval_csv << ',' << fmt(e.fd_distance) << '\n';
    eval_csv.flush();
    if (log)
      *log << "eval it " << iteration << " mIoU " << std::fixed << std::setprecision(2) << 100.0 * e.miou
           << std::defaultfloat << "\n";
    return e;
  };
  if (start == 0) do_eval(0);

  StepSettings settings;
  settings.mode = cfg.mode;
  settings.uda = cfg.uda;
  settings.aug = cfg.augmentation;
  settings.fd = cfg.fd;
  settings.weight_decay = cfg.schedule.weight_decay;
  FDReference* ref_ptr = reference ? &*reference : nullptr;

  const int t_max = cfg.iterations();
  const int stop = opts.stop_after >= 0 ? std::min(t_max, start + opts.stop_after) : t_max;
  const int crop_h = cfg.augmentation.crop_h, crop_w = cfg.augmentation.crop_w;
  int t = start;
  for (; t < stop; ++t) {
    std::vector<SegSample> labeled, target;
    std::vector<long> src_ids, src_cls, tgt_ids;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const RCSDraw d = sample_source(stats, rcs, rcs_rng);
      src_ids.push_back(d.sample);
      src_cls.push_back(d.cls);
      labeled.push_back(random_crop(labeled_pool[d.sample], crop_h, crop_w, aug_rng));
      if (cfg.mode == TrainMode::uda) {
        const auto k = std::uniform_int_distribution<std::size_t>(0, data.target.size() - 1)(target_rng);
        tgt_ids.push_back(static_cast<long>(k));
        target.push_back(random_crop(data.target[k], crop_h, crop_w, aug_rng));
      }
    }
    trace << t << ',' << join_ids(src_ids) << ',' << join_ids(src_cls) << ',' << join_ids(tgt_ids) << '\n';
    settings.lr_encoder = lr_at(cfg.schedule, t, ParamGroup::encoder);
    settings.lr_decoder = lr_at(cfg.schedule, t, ParamGroup::decoder);
    LossBundle lb;
    try {
      lb = train_step(st, ref_ptr, labeled, target, settings, aug_rng, mix_rng);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at iteration " + std::to_string(t));
    }
    metrics << t << ',' << fmt(lb.source) << ',' << fmt(lb.target) << ',' << fmt(lb.fd) << ',' << fmt(lb.q_mean)
            << ',' << fmt(settings.lr_encoder) << ',' << fmt(settings.lr_decoder) << '\n';
    if (log && (t + 1) % 100 == 0)
      *log << "it " << t + 1 << " L_S " << lb.source << " L_T " << lb.target << " L_FD " << lb.fd << " q "
           << lb.q_mean << "\n";
    if ((t + 1) % cfg.eval_interval == 0 && t + 1 < t_max) do_eval(t + 1);
    if (cfg.checkpoint_interval > 0 && (t + 1) % cfg.checkpoint_interval == 0 && t + 1 < stop) {
      metrics.flush();
      trace.flush();
      save_checkpoint(ckpt_path, make_checkpoint(cfg, hash, st, t + 1, rcs.temperature, rcs_rng, target_rng,
                                                 aug_rng, mix_rng));
    }
  }
  metrics.flush();
  trace.flush();
  result.iterations_run = t - start;
  save_checkpoint(ckpt_path,
                  make_checkpoint(cfg, hash, st, t, rcs.temperature, rcs_rng, target_rng, aug_rng, mix_rng));
  if (t < t_max) {
    eval_csv.flush();
    result.history = read_eval_csv(out / "eval.csv", C);
    return result;
  }

  const EvalPoint final_point = do_eval(t_max);
  result.final_report = last_report;
  result.history = read_eval_csv(out / "eval.csv", C);
  {
    std::ofstream rep(out / "report.csv");
    std::vector<std::string> names;
    for (const ClassDef& c : cfg.dataset.classes) names.push_back(c.name);
    write_report_csv(rep, result.final_report, names);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  json summary{{"config_hash", hash},
               {"mode", to_string(cfg.mode)},
               {"seed", cfg.seed},
               {"iterations", t_max},
               {"rcs_temperature", rcs.temperature},
               {"final", report_json(result.final_report, cfg.dataset)},
               {"final_fd_distance", std::isnan(final_point.fd_distance) ? json(nullptr)
                                                                         : json(final_point.fd_distance)},
               {"runtime_seconds", secs}};
  std::ofstream(out / "metrics.json") << summary.dump(2) << "\n";
  return result;
}

RunResult run_cached(const RunConfig& cfg, std::ostream* log) {
  const fs::path out(cfg.out_dir);
  const std::string hash = config_hash(cfg);
  std::ifstream in(out / "metrics.json");
  if (in) {
    try {
      json j = json::parse(in);
      if (j.value("config_hash", "") == hash && fs::exists(out / "eval.csv")) {
        RunResult r;
        r.config_hash = hash;
        r.rcs_temperature = j.value("rcs_temperature", 0.0);
        r.history = read_eval_csv(out / "eval.csv", cfg.dataset.num_classes());
        const EvalPoint& last = r.history.back();
        r.final_report.iou = last.iou;
        r.final_report.included.resize(last.iou.size());
        for (std::size_t c = 0; c < last.iou.size(); ++c) r.final_report.included[c] = !std::isnan(last.iou[c]);
        r.final_report.miou = j.at("final").at("miou").get<double>();
        r.iterations_run = 0;
        if (log) *log << "cached run " << out.string() << "\n";
        return r;
      }
    } catch (const json::exception&) {
    }
  }
  RunOptions opts;
  opts.log = log;
  opts.resume = true;
  return run(cfg, opts);
}

LoadedRun load_run_checkpoint(const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  LoadedRun r;
  try {
    r.config = run_config_from_json(ck.meta.at("config"));
    r.iteration = ck.meta.at("iteration").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  std::mt19937_64 rng(0);
  r.student = build_model<float>(r.config.model, rng);
  unpack_params(ck, "student", r.student.params);
  return r;
}

std::vector<AblationVariant> ablation_variants(const RunConfig& base) {
  RunConfig b = base;
  b.mode = TrainMode::uda;
  b.rcs.enabled = false;
  b.fd = false;
  b.uda.margin_top = b.uda.margin_bottom = 0;
  std::vector<AblationVariant> v;
  RunConfig no_warm = b;
  no_warm.schedule.warmup = false;
  v.push_back({"no_warmup", no_warm});
  v.push_back({"warmup", b});
  RunConfig rcs = b;
  rcs.rcs.enabled = true;
  v.push_back({"rcs", rcs});
  RunConfig fd = b;
  fd.fd = true;
  v.push_back({"fd", fd});
  RunConfig rcs_fd = rcs;
  rcs_fd.fd = true;
  v.push_back({"rcs_fd", rcs_fd});
  RunConfig full = rcs_fd;
  // Same proportions as 15 and 120 rows of a 512-row crop.
  full.uda.margin_top = std::max(1, static_cast<int>(std::lround(full.model.input_h * 15.0 / 512.0)));
  full.uda.margin_bottom = static_cast<int>(std::lround(full.model.input_h * 120.0 / 512.0));
  full.uda.alpha = 0.999;
  v.push_back({"rcs_fd_crop_alpha", full});
  return v;
}

std::vector<AblationSummary> summarize(std::span<const AblationRow> rows) {
  std::vector<AblationSummary> out;
  std::map<std::string, std::vector<double>> by;
  for (const AblationRow& r : rows) {
    if (!by.count(r.variant)) out.push_back({r.variant, 0.0, 0.0, 0});
    by[r.variant].push_back(r.miou);
  }
  for (AblationSummary& s : out) {
    const std::vector<double>& x = by[s.variant];
    s.n = static_cast<int>(x.size());
    double sum = 0.0;
    for (double v : x) sum += v;
    s.mean = sum / s.n;
    double ss = 0.0;
    for (double v : x) ss += (v - s.mean) * (v - s.mean);
    s.sd = s.n > 1 ? std::sqrt(ss / (s.n - 1)) : 0.0;
  }
  return out;
}

std::vector<AblationSummary> ablation_suite(const RunConfig& base, std::span<const std::uint64_t> seeds,
                                            std::ostream* log) {
  if (seeds.empty()) throw ConfigError("ablation: no seeds");
  const fs::path root(base.out_dir.empty() ? "ablation" : base.out_dir);
  fs::create_directories(root);
  std::vector<AblationRow> rows;
  std::ofstream raw(root / "ablation_runs.csv");
  raw << "variant,seed,mIoU\n";
  for (const AblationVariant& v : ablation_variants(base)) {
    for (std::uint64_t seed : seeds) {
      RunConfig c = v.config;
      c.seed = seed;
      c.out_dir = (root / v.name / ("seed" + std::to_string(seed))).string();
      if (log) *log << "ablation " << v.name << " seed " << seed << "\n";
      const RunResult r = run_cached(c, log);
      rows.push_back({v.name, seed, 100.0 * r.final_report.miou});
      raw << v.name << ',' << seed << ',' << fmt(rows.back().miou) << '\n';
      raw.flush();
    }
  }
  const std::vector<AblationSummary> sum = summarize(rows);
  std::ofstream s(root / "ablation_summary.csv");
  s << "variant,mean_mIoU,sd_mIoU,n\n";
  for (const AblationSummary& a : sum) s << a.variant << ',' << fmt(a.mean) << ',' << fmt(a.sd) << ',' << a.n << '\n';
  return sum;
}

}  // namespace daformer
