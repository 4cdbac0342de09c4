#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "novas/harness/checkpoint.hpp"
#include "novas/harness/experiments.hpp"
#include "novas/harness/io.hpp"
#include "novas/problems/portfolio.hpp"

using namespace novas;
using namespace novas::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("novas-harness-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig base(const std::string& experiment) {
  return RunConfig::from_json({{"experiment", experiment}, {"seed", 7}, {"novas", {{"samples", 20}, {"iters", 3}}}});
}

RunConfig tiny_spen(const fs::path& dir) {
  auto cfg = base("spen");
  for (const char* s : {"dataset.train=48", "dataset.test=16", "energy.width=6", "energy.layers=2", "optimizer.epochs=4",
                        "optimizer.batch=16", "output.wall_time=false", "sweep.iterations=1,3",
                        "landscape.x_points=4", "landscape.y_points=5"}) {
    cfg.set(s);
  }
  cfg.set("output.dir", dir.string());
  return cfg;
}

RunConfig tiny_cartpole(const fs::path& dir) {
  auto cfg = base("cartpole");
  for (const char* s : {"optimizer.iterations=4", "optimizer.batch=6", "cartpole.steps=10", "cartpole.horizon=0.2",
                        "novas.sigma0=10", "train.validate_every=2", "train.validation_batch=6",
                        "evaluation.rollouts=6", "evaluation.chunk=3", "evaluation.iters=2", "output.wall_time=false"}) {
    cfg.set(s);
  }
  cfg.set("output.dir", dir.string());
  return cfg;
}

std::vector<std::vector<double>> read_rows(const fs::path& csv) {
  std::istringstream in(read_file(csv));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) row.push_back(cell == "nan" ? NAN : std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config validation names the offending key") {
  auto cfg = RunConfig::from_json({{"experiment", "bench"}, {"seed", 1}, {"novas", {{"iters", 3}}}});
  CHECK(error_of([&] { cfg.validate(); }).find("'novas.samples'") != std::string::npos);
  cfg.set("novas.samples=10");
  CHECK_NOTHROW(cfg.validate());

  CHECK(error_of([] { RunConfig::from_json({{"novas", {{"sample", 3}}}}); }).find("'novas.sample'") !=
        std::string::npos);
  CHECK(error_of([&] { cfg.set("optimizer.learning_rate=0.1"); }).find("unknown") != std::string::npos);
  CHECK(error_of([&] { cfg.set("novas.samples=many"); }).find("'novas.samples'") != std::string::npos);
  CHECK(error_of([&] { cfg.set("novas.samples=2.5"); }).find("integer") != std::string::npos);
  CHECK(error_of([&] { cfg.set("novas.samples"); }).find("key=value") != std::string::npos);
  CHECK(error_of([] { RunConfig::from_json({{"seed", "x"}}); }).find("'seed'") != std::string::npos);

  cfg.set("experiment=chess");
  CHECK(error_of([&] { cfg.validate(); }).find("'experiment'") != std::string::npos);
}

TEST_CASE("config precedence and value parsing") {
  auto cfg = base("spen");
  CHECK(cfg.number("novas.kappa") == 5.0);  // schema default
  auto file = RunConfig::from_json({{"novas", {{"kappa", 2}, {"samples", 50}}}});
  cfg.merge(file);
  CHECK(cfg.number("novas.kappa") == 2.0);
  CHECK(cfg.count("novas.samples") == 50);
  CHECK(cfg.count("novas.iters") == 3);  // untouched by the merge
  cfg.set("novas.kappa=3.5");
  CHECK(cfg.number("novas.kappa") == 3.5);

  cfg.set("sweep.iterations=1,2,4");
  CHECK(cfg.numbers("sweep.iterations") == std::vector<double>{1, 2, 4});
  cfg.set("sweep.iterations=[8, 16]");
  CHECK(cfg.numbers("sweep.iterations") == std::vector<double>{8, 16});
  cfg.set("output.dir=some dir/with=equals");
  CHECK(cfg.text("output.dir") == "some dir/with=equals");
  cfg.set("novas.normalize=false");
  CHECK_FALSE(cfg.flag("novas.normalize"));
  cfg.set("market.seed=-4");
  CHECK_THROWS_AS(cfg.count("market.seed"), ConfigError);

  const json resolved = cfg.resolved();
  CHECK(resolved["novas"]["kappa"] == 3.5);
  CHECK(resolved["optimizer"]["lr"] == 5e-3);
  CHECK_FALSE(cfg.explicit_values().contains("optimizer"));
  CHECK(RunConfig::from_json(resolved).resolved() == resolved);
}

TEST_CASE("every schema default has its declared kind") {
  for (const auto& key : config_schema()) {
    if (key.fallback.is_null()) continue;
    CAPTURE(key.name);
    CHECK_NOTHROW(RunConfig().set(key.name, key.fallback));
  }
}

TEST_CASE("content hash matches git blob ids") {
  CHECK(content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("csv numbers round-trip exactly") {
  const fs::path dir = scratch("csv");
  const std::vector<double> values{0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0};
  {
    CsvWriter csv(dir / "a.csv", {"a", "b", "c", "d", "e"});
    csv.row(values);
    CHECK_THROWS(csv.row(std::vector<double>{1.0}));
  }
  CHECK(read_rows(dir / "a.csv").front() == values);
  CHECK(format_number(std::nan("")) == "nan");
  {
    CsvWriter again(dir / "a.csv", {"a", "b", "c", "d", "e"}, true);
    again.row(values);
  }
  CHECK(read_rows(dir / "a.csv").size() == 2);  // header written once
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const fs::path dir = scratch("ckpt");
  RandomStream rng(3);
  nn::Mlp mlp({3, 5, 2}, {nn::Activation::Tanh, nn::Activation::Identity}, rng);
  nn::Adam adam(mlp.named_parameters(), {});
  for (int i = 0; i < 3; ++i) {
    adam.zero_grad();
    sum_all(square(mlp.forward(rng.normal_tensor({4, 3})))).backward();
    adam.step();
  }
  auto c = Checkpoint::capture(mlp.named_parameters(), adam);
  c.kind = "spen";
  c.cursor = 3;
  c.seed = 99;
  c.extra.push_back({"odd", {2}, {std::numeric_limits<double>::denorm_min(), -0.0}});
  c.meta["note"] = 1.5;
  c.save(dir / "ck");
  CHECK(fs::exists(dir / "ck.json"));
  CHECK(fs::exists(dir / "ck.bin"));

  const auto back = Checkpoint::load(dir / "ck.json");
  CHECK(back.kind == "spen");
  CHECK(back.cursor == 3);
  CHECK(back.seed == 99);
  CHECK(back.optimizer_steps == 3);
  CHECK(back.meta["note"] == 1.5);
  REQUIRE(back.parameters.size() == c.parameters.size());
  for (std::size_t i = 0; i < c.parameters.size(); ++i) {
    CHECK(back.parameters[i].name == c.parameters[i].name);
    CHECK(back.parameters[i].shape == c.parameters[i].shape);
    CHECK(std::memcmp(back.parameters[i].data.data(), c.parameters[i].data.data(),
                      c.parameters[i].data.size() * sizeof(double)) == 0);
  }
  CHECK(back.first_moments == c.first_moments);
  CHECK(back.second_moments == c.second_moments);
  CHECK(std::signbit(back.extra[0].data[1]));
  CHECK(back.extra[0].data[0] == std::numeric_limits<double>::denorm_min());

  // Restoring into a fresh model reproduces its outputs.
  RandomStream other(17);
  nn::Mlp fresh({3, 5, 2}, {nn::Activation::Tanh, nn::Activation::Identity}, other);
  nn::Adam fresh_adam(fresh.named_parameters(), {});
  back.apply(fresh.named_parameters(), &fresh_adam);
  const Tensor x = rng.normal_tensor({2, 3});
  CHECK(fresh.forward(x).to_vector() == mlp.forward(x).to_vector());
  CHECK(fresh_adam.steps() == 3);

  nn::Mlp wrong({3, 4, 2}, {nn::Activation::Tanh, nn::Activation::Identity}, other);
  CHECK_THROWS(back.apply(wrong.named_parameters()));

  {
    std::fstream bin(dir / "ck.bin", std::ios::in | std::ios::out | std::ios::binary);
    bin.seekp(8);
    bin.put('\x7f');
  }
  CHECK_THROWS_WITH(Checkpoint::load(dir / "ck"), doctest::Contains("hash mismatch"));
}

TEST_CASE("identical config and seed give byte-identical artifacts") {
  const auto a = scratch("det-a"), b = scratch("det-b");
  std::ostringstream log;
  spen_train(tiny_spen(a), log);
  spen_train(tiny_spen(b), log);
  CHECK(read_file(a / "metrics.csv") == read_file(b / "metrics.csv"));
  CHECK(read_file(a / "checkpoint.bin") == read_file(b / "checkpoint.bin"));
  const json manifest = json::parse(read_file(a / "manifest.json"));
  CHECK_FALSE(manifest.contains("wall_seconds"));
  CHECK(manifest["artifacts"]["metrics.csv"] == file_hash(a / "metrics.csv"));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["config"]["energy"]["width"] == 6);

  auto timed = tiny_spen(scratch("timed"));
  timed.set("output.wall_time=true");
  spen_train(timed, log);
  const fs::path dir = timed.text("output.dir");
  CHECK(read_file(dir / "metrics.csv").rfind("epoch,train_loss,test_loss,wall_time\n", 0) == 0);
  CHECK(json::parse(read_file(dir / "manifest.json")).contains("wall_seconds"));
}

TEST_CASE("spen training resumes exactly") {
  const auto whole = scratch("spen-whole"), part = scratch("spen-part");
  std::ostringstream log;
  spen_train(tiny_spen(whole), log);
  auto first = tiny_spen(part);
  first.set("output.checkpoint_every=2");
  spen_train(first, log);
  auto second = tiny_spen(part);
  second.set("resume", (part / "checkpoints" / "epoch-2").string());
  spen_train(second, log);
  const auto a = read_rows(whole / "metrics.csv"), b = read_rows(part / "metrics.csv");
  REQUIRE(a.size() == 5);
  REQUIRE(b.size() == 5);
  for (std::size_t e = 0; e < a.size(); ++e) {
    CHECK(b[e][1] == doctest::Approx(a[e][1]).epsilon(1e-10));
    CHECK(b[e][2] == doctest::Approx(a[e][2]).epsilon(1e-10));
  }
  CHECK(log.str().find("warning") == std::string::npos);

  auto changed = tiny_spen(part);
  changed.set("resume", (part / "checkpoints" / "epoch-2").string());
  changed.set("optimizer.lr=0.01");
  std::ostringstream warn;
  spen_train(changed, warn);
  CHECK(warn.str().find("warning: resuming") != std::string::npos);
}

TEST_CASE("fbsde training resumes exactly, including the best-validation state") {
  const auto whole = scratch("fb-whole"), part = scratch("fb-part");
  std::ostringstream log;
  fbsde_train(tiny_cartpole(whole), log);
  auto first = tiny_cartpole(part);
  first.set("output.checkpoint_every=1");
  fbsde_train(first, log);
  auto second = tiny_cartpole(part);
  second.set("resume", (part / "checkpoints" / "iteration-3").string());
  fbsde_train(second, log);
  CHECK(read_file(whole / "metrics.csv") == read_file(part / "metrics.csv"));
  CHECK(read_file(whole / "checkpoint.bin") == read_file(part / "checkpoint.bin"));

  auto wrong = tiny_cartpole(scratch("fb-wrong"));
  wrong.set("resume", (whole / "checkpoint").string());
  wrong.set("experiment=spen");
  CHECK_THROWS(spen_train(wrong, log));
}

TEST_CASE("run dispatches train then evaluate") {
  const auto dir = scratch("run-cartpole");
  std::ostringstream log;
  const json out = run(tiny_cartpole(dir), log);
  CHECK(out.contains("fbsde-train"));
  const json& fb = out["fbsde-eval"]["strategies"]["fbsde"];
  CHECK(fb.contains("mean_abs_angle_error"));
  const std::string traj = read_file(dir / "trajectories.csv");
  CHECK(std::count(traj.begin(), traj.end(), '\n') == 1 + 6 * 11);
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest["verb"] == "run");
  for (const char* f : {"metrics.csv", "checkpoint.json", "checkpoint.bin", "trajectories.csv", "evaluation.csv"}) {
    CAPTURE(f);
    CHECK(manifest["artifacts"].contains(f));
  }
  auto bad = tiny_cartpole(dir);
  CHECK_THROWS_AS(spen_eval_sweep(bad, log), ConfigError);
}

TEST_CASE("portfolio evaluation compares against baselines on common noise") {
  auto cfg = tiny_cartpole(scratch("run-portfolio"));
  cfg.set("experiment=portfolio");
  cfg.set("market.steps=6");
  cfg.set("novas.sigma0=1");
  std::ostringstream log;
  const json out = run(cfg, log);
  const json& s = out["fbsde-eval"]["strategies"];
  for (const char* name : {"fbsde", "equal", "random"}) {
    CAPTURE(name);
    CHECK(s.contains(name));
    CHECK(s[name].contains("mean_excess_wealth"));
  }
  const fs::path dir = cfg.text("output.dir");
  const auto market = json::parse(read_file(dir / "market.json"));
  auto from_file = cfg;
  from_file.set("market.file", (dir / "market.json").string());
  from_file.set("market.seed=12345");  // ignored when a file is given
  CHECK(dynamic_cast<problems::Portfolio&>(*make_problem(from_file)).market().to_json() == market);
}

TEST_CASE("spen sweep and landscape read the trained checkpoint") {
  const auto dir = scratch("spen-run");
  std::ostringstream log;
  const json out = run(tiny_spen(dir), log);
  CHECK(out["spen-eval-sweep"]["sweep"].size() == 2);
  CHECK(read_rows(dir / "landscape.csv").size() == 4 * 5);
  CHECK(read_rows(dir / "trace.csv").size() == 4);
  CHECK(out["spen-landscape"]["trace_rmse"].get<double>() >= 0.0);
}

TEST_CASE("bench: convergence, exploration and the comparison with gradient descent") {
  auto cfg = base("bench");
  cfg.set("novas.samples=100");
  cfg.set("novas.iters=20");
  cfg.set("novas.sigma0=3");
  cfg.set("novas.epsilon=1e-4");
  const auto opts = bench_options(cfg);
  auto rate = [](const std::vector<BenchRow>& rows, const std::string& method, double sigma0) {
    for (const auto& r : rows) {
      if (r.method == method && (method == "gd" || r.sigma0 == sigma0)) return r.rate();
    }
    FAIL("missing row");
    return 0.0;
  };

  auto o = opts;
  o.sigma_sweep = {};
  const auto quad = bench_function(test_function("quadratic"), o);
  CHECK(rate(quad, "novas", 3.0) == 1.0);

  o.sigma_sweep = {0.1, 1.0};
  const auto multi = bench_function(test_function("multimodal"), o);
  CHECK(rate(multi, "novas", 0.1) < rate(multi, "novas", 1.0));
  CHECK(rate(multi, "novas", 1.0) < rate(multi, "novas", 3.0));
  CHECK(rate(multi, "gd", 0.0) < rate(multi, "novas", 3.0));
  for (const auto& r : multi) CHECK(r.evaluations == 2000);

  const auto& fn = test_function("rastrigin");
  const double origin[2] = {0.0, 0.0};
  CHECK(fn.value(origin) == 0.0);
  double g[2];
  fn.gradient(origin, g);
  CHECK(g[0] == 0.0);
  CHECK_THROWS(test_function("sphere"));
}

TEST_CASE("inspect-checkpoint summarizes without the payload") {
  const auto dir = scratch("inspect");
  std::ostringstream log;
  spen_train(tiny_spen(dir), log);
  const json s = inspect_checkpoint(dir / "checkpoint");
  CHECK(s["kind"] == "spen");
  CHECK(s["cursor"] == 4);
  CHECK(s["parameter_count"].get<std::size_t>() == 2 * 6 + 6 + 6 * 6 + 6 + 6 + 1);
  CHECK(s["parameters"][0].contains("shape"));
}
