#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

#include "daformer/experiment/checkpoint.hpp"
#include "daformer/experiment/config.hpp"
#include "daformer/experiment/plot.hpp"
#include "daformer/experiment/runner.hpp"

using namespace daformer;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("daformer_test_experiment") / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t data_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n == 0 ? 0 : n - 1;
}

// 32x32 images, a handful of samples, tiny network and no pretraining.
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
  c.schedule.t_max = 10;
  c.eval_interval = 5;
  c.checkpoint_interval = 4;
  c.fd_probe_samples = 4;
  c.pretrain.enabled = false;
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("config json round trip and unknown keys") {
  RunConfig c = desk_preset();
  c.seed = 7;
  c.rcs.enabled = true;
  c.uda.alpha = 0.999;
  c.schedule.warmup = false;
  const nlohmann::json j = to_json(c);
  const RunConfig back = run_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(config_hash(back) == config_hash(c));

  nlohmann::json bad = j;
  bad["uda"]["tua"] = 0.9;
  CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
  nlohmann::json bad2 = j;
  bad2["learning_rate"] = 1;
  CHECK_THROWS_AS(run_config_from_json(bad2), ConfigError);
  nlohmann::json bad3 = j;
  bad3["uda"]["tau"] = 1.5;
  CHECK_THROWS_AS(run_config_from_json(bad3), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"preset", "cityscapes"}}), ConfigError);
}

TEST_CASE("config hash") {
  // FNV-1a 64 reference values
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");

  RunConfig a = desk_preset(), b = desk_preset();
  b.out_dir = "/elsewhere";
  b.dataset_cache = "/cache";
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("checkpoint file format") {
  const fs::path dir = scratch("ckpt");
  Checkpoint ck;
  ck.meta = {{"iteration", 12}, {"name", "x"}};
  MatF a(2, 3);
  a << 1.5f, -0.0f, 3e-38f, std::numeric_limits<float>::max(), 1.0f / 3.0f, -7.25f;
  ck.arrays["a/b"] = a;
  ck.arrays["empty"] = MatF(0, 4);
  save_checkpoint(dir / "x.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "x.ckpt");
  CHECK(back.meta == ck.meta);
  REQUIRE(back.arrays.size() == 2);
  CHECK(std::memcmp(back.arrays.at("a/b").data(), a.data(), sizeof(float) * 6) == 0);
  CHECK(back.arrays.at("empty").cols() == 4);

  std::string bytes = slurp(dir / "x.ckpt");
  std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), FormatError);
  bytes[0] = 'X';
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), FormatError);

  ParamStore<float> p;
  p.add("w", 2, 2).value.setConstant(2.0f);
  Checkpoint packed;
  pack_params(packed, "s", p);
  ParamStore<float> q;
  q.add("w", 2, 2);
  unpack_params(packed, "s", q);
  CHECK(q.at("w").value == p.at("w").value);
  ParamStore<float> wrong;
  wrong.add("w", 3, 2);
  CHECK_THROWS_AS(unpack_params(packed, "s", wrong), StateError);
}

TEST_CASE("smoke runs in every mode") {
  for (TrainMode m : {TrainMode::source_only, TrainMode::uda, TrainMode::oracle}) {
    CAPTURE(to_string(m));
    const fs::path out = scratch("smoke_" + to_string(m));
    RunConfig c = tiny_config(out);
    c.dataset_cache = (out / "data").string();
    c.mode = m;
    const RunResult r = run(c);
    CHECK(r.iterations_run == 10);
    CHECK(data_rows(out / "metrics.csv") == 10);
    CHECK(data_rows(out / "trace.csv") == 10);
    CHECK(data_rows(out / "eval.csv") == 3);  // 0, 5, 10
    CHECK(r.history.size() == 3);
    CHECK(fs::exists(out / "metrics.json"));
    CHECK(fs::exists(out / "report.csv"));
    CHECK(std::isfinite(r.final_report.miou));

    // metrics columns and the target term only in UDA mode
    const CsvTable t = read_csv(out / "metrics.csv");
    CHECK(t.header == std::vector<std::string>{"iter", "L_S", "L_T", "L_FD", "q_mean", "lr_encoder", "lr_decoder"});
    const std::vector<double> lt = t.numbers("L_T");
    const double lt_sum = std::accumulate(lt.begin(), lt.end(), 0.0);
    if (m == TrainMode::uda) CHECK(lt_sum > 0);
    else CHECK(lt_sum == 0);
  }
}

TEST_CASE("checkpoint reproduces the final mIoU") {
  const fs::path out = scratch("reload");
  RunConfig c = tiny_config(out);
  const RunResult r = run(c);
  LoadedRun loaded = load_run_checkpoint(out / "checkpoint.ckpt");
  CHECK(loaded.iteration == 10);
  CHECK(config_hash(loaded.config) == r.config_hash);
  const GeneratedDataset data = generate_dataset(loaded.config.dataset);
  const IoUReport rep = iou_report(evaluate(loaded.student, data.target_val));
  CHECK(rep.miou == r.final_report.miou);
}

TEST_CASE("traces are deterministic and resumable") {
  const fs::path base = scratch("trace");
  RunConfig a = tiny_config(base / "a");
  a.dataset_cache = (base / "data").string();
  RunConfig b = a;
  b.out_dir = (base / "b").string();
  run(a);
  run(b);
  CHECK(slurp(base / "a" / "trace.csv") == slurp(base / "b" / "trace.csv"));
  CHECK(slurp(base / "a" / "metrics.csv") == slurp(base / "b" / "metrics.csv"));

  SUBCASE("RCS changes the sampled sources") {
    RunConfig r = a;
    r.out_dir = (base / "rcs").string();
    r.rcs.enabled = true;
    run(r);
    CHECK(slurp(base / "a" / "trace.csv") != slurp(base / "rcs" / "trace.csv"));
  }
  SUBCASE("a different seed changes the trace") {
    RunConfig s = a;
    s.out_dir = (base / "seed").string();
    s.seed = 5;
    run(s);
    CHECK(slurp(base / "a" / "trace.csv") != slurp(base / "seed" / "trace.csv"));
  }
  SUBCASE("stop and resume") {
    RunConfig s = a;
    s.out_dir = (base / "resume").string();
    RunOptions first;
    first.stop_after = 6;
    const RunResult part = run(s, first);
    CHECK(part.iterations_run == 6);
    CHECK(data_rows(base / "resume" / "trace.csv") == 6);
    RunOptions second;
    second.resume = true;
    const RunResult rest = run(s, second);
    CHECK(rest.iterations_run == 4);
    CHECK(slurp(base / "a" / "trace.csv") == slurp(base / "resume" / "trace.csv"));
    CHECK(slurp(base / "a" / "metrics.csv") == slurp(base / "resume" / "metrics.csv"));
    CHECK(slurp(base / "a" / "eval.csv") == slurp(base / "resume" / "eval.csv"));

    RunConfig other = s;
    other.seed = 9;
    CHECK_THROWS_AS(run(other, second), StateError);
  }
}

TEST_CASE("ablation variants") {
  const std::vector<AblationVariant> v = ablation_variants(desk_preset());
  REQUIRE(v.size() == 6);
  const std::vector<std::string> names = {"no_warmup", "warmup", "rcs", "fd", "rcs_fd", "rcs_fd_crop_alpha"};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(v[i].name == names[i]);
    CHECK(v[i].config.mode == TrainMode::uda);
    const RunConfig back = run_config_from_json(to_json(v[i].config));
    CHECK(config_hash(back) == config_hash(v[i].config));
  }
  CHECK_FALSE(v[0].config.schedule.warmup);
  CHECK(v[1].config.schedule.warmup);
  CHECK((v[2].config.rcs.enabled && !v[2].config.fd));
  CHECK((!v[3].config.rcs.enabled && v[3].config.fd));
  CHECK((v[4].config.rcs.enabled && v[4].config.fd));
  CHECK(v[5].config.uda.alpha == 0.999);
  CHECK(v[5].config.uda.margin_top == 2);
  CHECK(v[5].config.uda.margin_bottom == 15);
  CHECK(v[4].config.uda.margin_top == 0);
}

TEST_CASE("ablation summary statistics") {
  const std::vector<AblationRow> rows = {{"a", 0, 1.0}, {"b", 0, 5.0}, {"a", 1, 2.0}, {"a", 2, 3.0}};
  const std::vector<AblationSummary> s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].variant == "a");
  CHECK(s[0].mean == 2.0);
  CHECK(s[0].sd == 1.0);
  CHECK(s[0].n == 3);
  CHECK(s[1].mean == 5.0);
  CHECK(s[1].sd == 0.0);
  CHECK(s[1].n == 1);
}

TEST_CASE("ablation suite runs every variant and seed") {
  const fs::path out = scratch("ablate");
  RunConfig c = tiny_config(out);
  c.schedule.t_max = 3;
  c.eval_interval = 3;
  c.dataset_cache = (out / "data").string();
  c.pretrain.enabled = true;
  c.pretrain.iterations = 3;
  c.pretrain.batch_size = 1;
  c.pretrain.t_warm = 1;
  c.pretrain_cache = (out / "pre").string();
  const std::vector<std::uint64_t> seeds = {0, 1, 2};
  const std::vector<AblationSummary> s = ablation_suite(c, seeds);
  CHECK(s.size() == 6);
  CHECK(data_rows(out / "ablation_runs.csv") == 18);
  const CsvTable runs = read_csv(out / "ablation_runs.csv");
  const std::vector<double> miou = runs.numbers("mIoU");
  const std::vector<std::string> var = runs.strings("variant");
  for (const AblationSummary& v : s) {
    std::vector<double> x;
    for (std::size_t i = 0; i < var.size(); ++i)
      if (var[i] == v.variant) x.push_back(miou[i]);
    REQUIRE(x.size() == 3);
    const double mean = (x[0] + x[1] + x[2]) / 3;
    double ss = 0;
    for (double y : x) ss += (y - mean) * (y - mean);
    CHECK(v.n == 3);
    CHECK(v.mean == doctest::Approx(mean).epsilon(1e-6));
    CHECK(v.sd == doctest::Approx(std::sqrt(ss / 2)).epsilon(1e-6));
  }
  CHECK(fs::exists(out / "ablation_summary.csv"));
}

TEST_CASE("plots") {
  const fs::path dir = scratch("plot");
  std::ofstream(dir / "empty.csv") << "iter,mIoU\n";
  std::ofstream(dir / "one.csv") << "iter,mIoU\n5,42.5\n";
  std::ofstream(dir / "stats.csv") << "class,name,kind,pixels,f,images,P\n"
                                   << "0,sky,stuff,900,0.6,10,0.2\n"
                                   << "1,disk,thing,500,0.333,8,0.3\n"
                                   << "2,star,thing,100,0.067,2,0.5\n";

  const std::vector<std::string> none;
  CHECK_THROWS_AS(make_plot("iou_curve", none, dir / "x.svg"), FormatError);
  const std::vector<std::string> empty = {(dir / "empty.csv").string()};
  CHECK_THROWS_AS(make_plot("iou_curve", empty, dir / "x.svg"), FormatError);

  const std::vector<std::string> one = {(dir / "one.csv").string()};
  make_plot("iou_curve", one, dir / "one.svg");
  const std::string svg = slurp(dir / "one.svg");
  const std::regex marker("class=\"marker\"");
  CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), marker), std::sregex_iterator()) == 1);
  CHECK_THROWS_AS(make_plot("iou_curve", one, dir / "x.svg", "star"), FormatError);

  const std::vector<std::string> stats = {(dir / "stats.csv").string()};
  make_plot("p_of_c", stats, dir / "p.svg");
  const std::vector<double> p = read_bar_values(dir / "p.svg");
  REQUIRE(p.size() == 3);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
  make_plot("class_stats", stats, dir / "f.svg");
  CHECK(read_bar_values(dir / "f.svg")[2] == doctest::Approx(0.067));
  CHECK_THROWS_AS(make_plot("pie", stats, dir / "x.svg"), ConfigError);
}

TEST_CASE("shipped config files load") {
  int n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(DAFORMER_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_run_config(e.path().string()));
    ++n;
  }
  CHECK(n >= 4);
  const RunConfig c = load_run_config((fs::path(DAFORMER_SOURCE_DIR) / "configs" / "desk_uda.json").string());
  CHECK(config_hash(c) == config_hash(desk_preset()));
}
