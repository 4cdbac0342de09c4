#include "novas/harness/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "novas/harness/checkpoint.hpp"
#include "novas/harness/io.hpp"
#include "novas/problems/cartpole.hpp"
#include "novas/problems/portfolio.hpp"

namespace novas::harness {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t master, SeedDomain domain) {
  RandomStream rng = RandomStream(master).split(static_cast<std::uint64_t>(domain));
  return rng();
}

search::NovasConfig novas_config(const RunConfig& cfg, const std::string& samples_key, const std::string& iters_key) {
  search::NovasConfig c;
  c.samples = cfg.count(samples_key);
  c.iterations = cfg.count(iters_key);
  c.learning_rate = cfg.number("novas.lr");
  c.shape = search::parse_shape(cfg.text("novas.shape"));
  c.kappa = cfg.number("novas.kappa");
  c.elite_fraction = cfg.number("novas.elite_frac");
  c.epsilon = cfg.number("novas.epsilon");
  c.normalize = cfg.flag("novas.normalize");
  c.mode = search::parse_mode(cfg.text("novas.mode"));
  c.validate();
  return c;
}

spen::SpenTrainOptions spen_options(const RunConfig& cfg) {
  spen::SpenTrainOptions o;
  o.epochs = cfg.count("optimizer.epochs");
  o.batch = cfg.count("optimizer.batch");
  o.lr = cfg.number("optimizer.lr");
  o.inner.kind = spen::parse_inner(cfg.text("inner.kind"));
  o.inner.novas = novas_config(cfg);
  o.inner.cem_elites = cfg.count("inner.cem_elites");
  o.inner.mean0 = cfg.number("novas.mean0");
  o.inner.sigma0 = cfg.number("novas.sigma0");
  o.inner.gd_steps = cfg.count("inner.gd_steps");
  o.inner.gd_lr = cfg.number("inner.gd_lr");
  o.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  return o;
}

spen::RegressionDataset spen_dataset(const RunConfig& cfg) {
  return spen::RegressionDataset::generate(cfg.count("dataset.train"), cfg.count("dataset.test"),
                                           derive_seed(cfg.integer("seed"), SeedDomain::Data));
}

fbsde::NetworkOptions network_options(const RunConfig& cfg) {
  fbsde::NetworkOptions o;
  o.hidden = cfg.count("network.hidden");
  o.layers = cfg.count("network.layers");
  o.hessian_head = cfg.flag("network.hessian_head");
  o.trainable_initial_gradient = cfg.flag("network.trainable_initial_gradient");
  o.initial_value = cfg.number("network.initial_value");
  o.input_shift = cfg.numbers("network.input_shift");
  o.input_scale = cfg.numbers("network.input_scale");
  return o;
}

fbsde::TrainOptions fbsde_train_options(const RunConfig& cfg) {
  fbsde::TrainOptions o;
  o.iterations = cfg.count("optimizer.iterations");
  o.batch = cfg.count("optimizer.batch");
  o.schedule.initial = cfg.number("optimizer.lr");
  for (double m : cfg.numbers("optimizer.milestones")) o.schedule.milestones.push_back(std::lround(m));
  o.schedule.factor = cfg.number("optimizer.decay");
  o.train_novas = novas_config(cfg);
  o.eval_novas = novas_config(cfg, "evaluation.samples", "evaluation.iters");
  o.sigma0 = cfg.number("novas.sigma0");
  o.loss = fbsde::LossWeights::from(cfg.numbers("loss.weights"), cfg.number("loss.delta"));
  o.validate_every = cfg.count("train.validate_every");
  o.validation_batch = cfg.count("train.validation_batch");
  o.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  return o;
}

fbsde::EvaluationOptions fbsde_eval_options(const RunConfig& cfg) {
  fbsde::EvaluationOptions o;
  o.rollouts = cfg.count("evaluation.rollouts");
  o.chunk = cfg.count("evaluation.chunk");
  o.jobs = cfg.count("jobs");
  o.novas = novas_config(cfg, "evaluation.samples", "evaluation.iters");
  o.sigma0 = cfg.number("novas.sigma0");
  o.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  return o;
}

namespace {

problems::MarketParams market_params(const RunConfig& cfg) {
  if (!cfg.text("market.file").empty()) {
    return problems::MarketParams::from_json(json::parse(read_file(cfg.text("market.file"))));
  }
  problems::MarketOptions o;
  o.stocks = cfg.count("market.stocks");
  o.traded = cfg.count("market.traded");
  o.factors = cfg.count("market.factors");
  o.risk_free = cfg.number("market.risk_free");
  o.horizon = cfg.number("market.horizon");
  o.steps = cfg.count("market.steps");
  const auto seed = cfg.integer("market.seed");
  auto market = problems::generate_market(
      o, seed < 0 ? derive_seed(cfg.integer("seed"), SeedDomain::Market) : static_cast<std::uint64_t>(seed));
  market.cost_scale = cfg.number("market.cost_scale");
  market.sharpness = cfg.number("market.sharpness");
  market.validate();
  return market;
}

}  // namespace

std::unique_ptr<fbsde::SocProblem> make_problem(const RunConfig& cfg) {
  const std::string exp = cfg.text("experiment");
  if (exp == "cartpole") {
    problems::CartPoleParams p;
    p.steps = cfg.count("cartpole.steps");
    p.horizon = cfg.number("cartpole.horizon");
    p.noise = cfg.number("cartpole.noise");
    p.control_cost = cfg.number("cartpole.control_cost");
    return std::make_unique<problems::CartPole>(p);
  }
  if (exp == "portfolio") return std::make_unique<problems::Portfolio>(market_params(cfg));
  throw ConfigError("experiment '" + exp + "' is not a stochastic control problem");
}

BenchOptions bench_options(const RunConfig& cfg) {
  BenchOptions o;
  o.novas = novas_config(cfg);
  o.sigma0 = cfg.number("novas.sigma0");
  o.sigma_sweep = cfg.numbers("bench.sigma_sweep");
  o.cem_elites = cfg.count("inner.cem_elites");
  o.trials = cfg.count("bench.seeds");
  o.tolerance = cfg.number("bench.tolerance");
  o.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  return o;
}

namespace {

using Clock = std::chrono::steady_clock;

class Session {
 public:
  Session(const RunConfig& cfg, std::string verb, std::ostream& log)
      : cfg(cfg), log(log), verb_(std::move(verb)), start_(Clock::now()) {
    cfg.validate();
    dir_ = cfg.text("output.dir");
    fs::create_directories(dir_);
  }

  const RunConfig& cfg;
  std::ostream& log;

  const fs::path& dir() const { return dir_; }
  fs::path artifact(const std::string& name) {
    const fs::path p = dir_ / name;
    if (std::find(artifacts_.begin(), artifacts_.end(), p) == artifacts_.end()) artifacts_.push_back(p);
    return p;
  }
  bool wall_time() const { return cfg.flag("output.wall_time"); }
  double elapsed() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg.integer("seed")); }

  json result(const std::string& name, json summary) {
    write_json(artifact(name + ".json"), summary);
    return summary;
  }

  void finish() {
    ManifestInfo info{verb_, cfg.resolved(), seed(), {}, {}};
    for (const auto& p : artifacts_) {
      if (fs::exists(p)) info.artifacts.push_back(p);
    }
    if (wall_time()) info.wall_seconds = elapsed();
    write_manifest(dir_, info);
  }

  void save_checkpoint(Checkpoint c, const std::string& kind, std::size_t cursor, const std::string& stem) {
    c.kind = kind;
    c.config_hash = config_hash(cfg.resolved());
    c.seed = seed();
    c.cursor = cursor;
    c.save(dir_ / stem);
    artifact(stem + ".json");
    artifact(stem + ".bin");
  }

  std::optional<Checkpoint> resume(const std::string& kind) {
    const std::string path = cfg.text("resume");
    if (path.empty()) return std::nullopt;
    Checkpoint c = Checkpoint::load(path);
    if (c.kind != kind) {
      throw std::runtime_error("checkpoint '" + path + "' holds a " + c.kind + " model, expected " + kind);
    }
    if (c.config_hash != config_hash(cfg.resolved())) {
      log << "warning: resuming from '" << path << "' whose config hash " << c.config_hash
          << " differs from the current config\n";
    }
    if (c.seed != seed()) log << "warning: checkpoint seed " << c.seed << " differs from seed " << seed() << '\n';
    return c;
  }

  Checkpoint load_model_checkpoint(const std::string& kind) const {
    const std::string explicit_path = cfg.text("checkpoint");
    const fs::path path = explicit_path.empty() ? dir_ / "checkpoint" : fs::path(explicit_path);
    Checkpoint c = Checkpoint::load(path);
    if (c.kind != kind) {
      throw std::runtime_error("checkpoint '" + path.string() + "' holds a " + c.kind + " model, expected " + kind);
    }
    return c;
  }

 private:
  std::string verb_;
  fs::path dir_;
  Clock::time_point start_;
  std::vector<fs::path> artifacts_;
};

void require_experiment(const RunConfig& cfg, std::initializer_list<const char*> allowed, const std::string& verb) {
  const std::string exp = cfg.text("experiment");
  for (const char* a : allowed) {
    if (exp == a) return;
  }
  throw ConfigError("verb '" + verb + "' does not apply to experiment '" + exp + "'");
}

// Keeps the header and the rows whose first field is at most `last`.
void truncate_metrics(const fs::path& csv, std::size_t last) {
  if (!fs::exists(csv)) return;
  std::istringstream in(read_file(csv));
  std::string kept, line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header || std::stoull(line.substr(0, line.find(','))) <= last) kept += line + '\n';
    header = false;
  }
  std::ofstream(csv, std::ios::trunc) << kept;
}

std::size_t log_period(std::size_t total) { return std::max<std::size_t>(1, total / 20); }

// ---------------------------------------------------------------------------
// SPEN

std::vector<std::string> with_wall(std::vector<std::string> columns, bool wall) {
  if (wall) columns.push_back("wall_time");
  return columns;
}

spen::EnergyNet spen_net(const RunConfig& cfg) {
  RandomStream init(derive_seed(cfg.integer("seed"), SeedDomain::Init));
  return spen::EnergyNet(cfg.count("energy.width"), cfg.count("energy.layers"), init);
}

json spen_train_impl(Session& s) {
  require_experiment(s.cfg, {"spen"}, "spen-train");
  const auto data = spen_dataset(s.cfg);
  auto net = spen_net(s.cfg);
  auto opts = spen_options(s.cfg);
  const bool wall = s.wall_time();
  const fs::path metrics_path = s.artifact("metrics.csv");
  json summary = {{"inner", spen::to_string(opts.inner.kind)}};

  auto row = [&](CsvWriter& csv, const spen::EpochRecord& r, double t) {
    std::vector<double> v{static_cast<double>(r.epoch), r.train_loss, r.test_loss};
    if (wall) v.push_back(t);
    csv.row(v);
    if (r.epoch % log_period(opts.epochs) == 0 || r.epoch == opts.epochs) {
      s.log << "epoch " << r.epoch << " train " << format_number(r.train_loss) << " test "
            << format_number(r.test_loss) << '\n';
    }
  };
  const auto columns = with_wall({"epoch", "train_loss", "test_loss"}, wall);

  const auto grid = s.cfg.numbers("inner.gd_lr_grid");
  if (opts.inner.kind == spen::InnerKind::GradientDescent && !grid.empty()) {
    if (!s.cfg.text("resume").empty()) throw ConfigError("resume is not supported with inner.gd_lr_grid");
    const auto tuning = spen::tune_gd_lr(net, data, opts, grid);
    CsvWriter tune(s.artifact("tuning.csv"), {"gd_lr", "validation_loss"});
    for (std::size_t i = 0; i < grid.size(); ++i) tune.row(std::vector<double>{grid[i], tuning.validation[i]});
    opts.inner.gd_lr = tuning.best_lr;
    s.log << "gd step size " << format_number(tuning.best_lr) << " chosen by validation loss\n";
    CsvWriter csv(metrics_path, columns);
    for (const auto& r : tuning.history) row(csv, r, std::nan(""));
    summary["test_loss"] = tuning.history.back().test_loss;
    summary["tuned_gd_lr"] = tuning.best_lr;
  } else {
    spen::SpenTrainer trainer(net, data, opts);
    const auto resumed = s.resume("spen");
    if (resumed) {
      resumed->apply(net.named_parameters(), &trainer.optimizer());
      trainer.restore(resumed->cursor);
      truncate_metrics(metrics_path, resumed->cursor);
      s.log << "resumed at epoch " << resumed->cursor << '\n';
    }
    CsvWriter csv(metrics_path, columns, resumed.has_value());
    spen::EpochRecord last{};
    if (!resumed) {
      last = trainer.initial_record();
      row(csv, last, s.elapsed());
    }
    const std::size_t every = s.cfg.count("output.checkpoint_every");
    while (!trainer.done()) {
      last = trainer.step();
      row(csv, last, s.elapsed());
      if (every && trainer.epoch() % every == 0 && !trainer.done()) {
        auto c = Checkpoint::capture(net.named_parameters(), trainer.optimizer());
        c.meta["gd_lr"] = opts.inner.gd_lr;
        s.save_checkpoint(std::move(c), "spen", trainer.epoch(), "checkpoints/epoch-" + std::to_string(trainer.epoch()));
      }
    }
    summary["test_loss"] = last.test_loss;
    auto c = Checkpoint::capture(net.named_parameters(), trainer.optimizer());
    c.meta["gd_lr"] = opts.inner.gd_lr;
    s.save_checkpoint(std::move(c), "spen", trainer.epoch(), "checkpoint");
    summary["epochs"] = trainer.epoch();
    return s.result("spen-train", summary);
  }
  auto c = Checkpoint::capture(net.named_parameters(), nn::Adam(net.named_parameters(), {}));
  c.meta["gd_lr"] = opts.inner.gd_lr;
  s.save_checkpoint(std::move(c), "spen", opts.epochs, "checkpoint");
  summary["epochs"] = opts.epochs;
  return s.result("spen-train", summary);
}

std::pair<spen::EnergyNet, spen::InnerOptions> load_spen(Session& s) {
  auto net = spen_net(s.cfg);
  const auto c = s.load_model_checkpoint("spen");
  c.apply(net.named_parameters());
  auto inner = spen_options(s.cfg).inner;
  if (c.meta.contains("gd_lr")) inner.gd_lr = c.meta["gd_lr"].get<double>();
  return {std::move(net), inner};
}

json spen_eval_sweep_impl(Session& s) {
  require_experiment(s.cfg, {"spen"}, "spen-eval-sweep");
  const auto data = spen_dataset(s.cfg);
  const auto [net, inner] = load_spen(s);
  std::vector<std::size_t> counts;
  for (double n : s.cfg.numbers("sweep.iterations")) {
    if (!(n >= 1) || n != std::floor(n)) throw ConfigError("sweep.iterations entries must be positive integers");
    counts.push_back(static_cast<std::size_t>(n));
  }
  const auto losses = spen::eval_altered_inner(net, data, inner, counts, s.seed());
  CsvWriter csv(s.artifact("sweep.csv"), {"iterations", "test_loss"});
  json table = json::array();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    csv.row(std::vector<double>{static_cast<double>(counts[i]), losses[i]});
    table.push_back({{"iterations", counts[i]}, {"test_loss", losses[i]}});
    s.log << "inner iterations " << counts[i] << " test loss " << format_number(losses[i]) << '\n';
  }
  return s.result("spen-eval-sweep", {{"inner", spen::to_string(inner.kind)}, {"sweep", table}});
}

json spen_landscape_impl(Session& s) {
  require_experiment(s.cfg, {"spen"}, "spen-landscape");
  const auto data = spen_dataset(s.cfg);
  const auto [net, inner] = load_spen(s);
  const auto xs = spen::linspace(0.0, 2.0 * std::numbers::pi, s.cfg.count("landscape.x_points"));
  const auto ys = spen::linspace(s.cfg.number("landscape.y_min"), s.cfg.number("landscape.y_max"),
                                 s.cfg.count("landscape.y_points"));
  const auto land = spen::energy_landscape_grid(net, data, xs, ys);
  {
    CsvWriter csv(s.artifact("landscape.csv"), {"x", "y", "log_energy"});
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (std::size_t j = 0; j < ys.size(); ++j) {
        csv.row(std::vector<double>{xs[i], ys[j], land.log_energy[i * ys.size() + j]});
      }
    }
  }
  CsvWriter trace(s.artifact("trace.csv"), {"x", "argmin", "truth"});
  double se = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double truth = spen::RegressionDataset::ground_truth(xs[i]);
    trace.row(std::vector<double>{xs[i], land.argmin[i], truth});
    se += std::pow(land.argmin[i] - truth, 2);
  }
  const double rmse = xs.empty() ? 0.0 : std::sqrt(se / static_cast<double>(xs.size()));
  s.log << "argmin trace rmse " << format_number(rmse) << '\n';
  return s.result("spen-landscape", {{"trace_rmse", rmse}});
}

// ---------------------------------------------------------------------------
// FBSDE

void write_market(Session& s, const fbsde::SocProblem& problem) {
  if (const auto* p = dynamic_cast<const problems::Portfolio*>(&problem)) {
    write_json(s.artifact("market.json"), p->market().to_json());
  }
}

fbsde::FbsdeNetwork fbsde_net(const RunConfig& cfg, const fbsde::SocProblem& problem) {
  RandomStream init(derive_seed(cfg.integer("seed"), SeedDomain::Init));
  return fbsde::FbsdeNetwork(problem.state_dim(), network_options(cfg), init);
}

Checkpoint capture_trainer(fbsde::FbsdeNetwork& net, fbsde::FbsdeTrainer& trainer) {
  auto c = Checkpoint::capture(net.named_parameters(), trainer.optimizer());
  if (trainer.best_validation()) {
    c.meta["best_validation"] = *trainer.best_validation();
    const auto params = net.named_parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.extra.push_back({"best/" + params[i].first, params[i].second.shape(), trainer.best_parameters()[i]});
    }
  }
  return c;
}

json fbsde_train_impl(Session& s) {
  require_experiment(s.cfg, {"cartpole", "portfolio"}, "fbsde-train");
  const auto problem = make_problem(s.cfg);
  write_market(s, *problem);
  auto net = fbsde_net(s.cfg, *problem);
  const auto opts = fbsde_train_options(s.cfg);
  fbsde::FbsdeTrainer trainer(*problem, net, opts);
  const bool wall = s.wall_time();
  const fs::path metrics_path = s.artifact("metrics.csv");

  const auto resumed = s.resume("fbsde");
  if (resumed) {
    resumed->apply(net.named_parameters(), &trainer.optimizer());
    trainer.restore(resumed->cursor);
    if (resumed->meta.contains("best_validation")) {
      std::vector<std::vector<double>> best;
      for (const auto& a : resumed->extra) best.push_back(a.data);
      trainer.restore_best(resumed->meta["best_validation"].get<double>(), std::move(best));
    }
    truncate_metrics(metrics_path, resumed->cursor);
    s.log << "resumed at iteration " << resumed->cursor << '\n';
  }
  CsvWriter csv(metrics_path, with_wall({"iteration", "loss", "terminal_cost", "initial_value", "validation"}, wall),
                resumed.has_value());
  auto row = [&](const fbsde::TrainRecord& r) {
    std::vector<double> v{static_cast<double>(r.iteration), r.loss, r.terminal_cost, r.initial_value, r.validation};
    if (wall) v.push_back(s.elapsed());
    csv.row(v);
    if (r.iteration % log_period(opts.iterations) == 0 || r.iteration == opts.iterations) {
      s.log << "iteration " << r.iteration << " loss " << format_number(r.loss) << " terminal cost "
            << format_number(r.terminal_cost) << " V0 " << format_number(r.initial_value);
      if (!std::isnan(r.validation)) s.log << " validation " << format_number(r.validation);
      s.log << '\n';
    }
  };
  fbsde::TrainRecord last{};
  if (!resumed) {
    last = trainer.initial_record();
    row(last);
  }
  const std::size_t every = s.cfg.count("output.checkpoint_every");
  while (!trainer.done()) {
    last = trainer.step();
    row(last);
    if (every && trainer.iteration() % every == 0 && !trainer.done()) {
      s.save_checkpoint(capture_trainer(net, trainer), "fbsde", trainer.iteration(),
                        "checkpoints/iteration-" + std::to_string(trainer.iteration()));
    }
  }
  s.save_checkpoint(capture_trainer(net, trainer), "fbsde", trainer.iteration(), "checkpoint");
  json summary = {{"problem", problem->name()},
                  {"iterations", trainer.iteration()},
                  {"loss", last.loss},
                  {"terminal_cost", last.terminal_cost},
                  {"initial_value", last.initial_value}};
  if (trainer.best_validation()) summary["best_validation"] = *trainer.best_validation();
  return s.result("fbsde-train", summary);
}

json strategy_summary(const fbsde::SocProblem& problem, const fbsde::Evaluation& e) {
  const auto t = e.terminal_moments();
  const double n = static_cast<double>(e.rollouts());
  double running = 0.0;
  for (double c : e.running_cost) running += c / n;
  json out = {{"mean_terminal_cost", t.mean}, {"std_terminal_cost", t.stddev}, {"mean_running_cost", running}};
  const std::size_t K = e.steps;
  if (problem.name() == "cartpole") {
    double angle = 0.0, position = 0.0;
    for (std::size_t r = 0; r < e.rollouts(); ++r) {
      angle += std::abs(e.state(r, K, 1) - std::numbers::pi) / n;
      position += std::abs(e.state(r, K, 0)) / n;
    }
    out["mean_abs_angle_error"] = angle;
    out["mean_abs_position"] = position;
  } else if (problem.name() == "portfolio") {
    const std::size_t stocks = e.state_dim - 1;
    double excess = 0.0, wins = 0.0;
    for (std::size_t r = 0; r < e.rollouts(); ++r) {
      double index = 0.0;
      for (std::size_t i = 0; i < stocks; ++i) index += e.state(r, K, i) / static_cast<double>(stocks);
      const double d = e.state(r, K, stocks) - index;
      excess += d / n;
      if (d > 0) wins += 1.0 / n;
    }
    out["mean_excess_wealth"] = excess;
    out["outperform_fraction"] = wins;
  }
  return out;
}

json fbsde_eval_impl(Session& s) {
  require_experiment(s.cfg, {"cartpole", "portfolio"}, "fbsde-eval");
  const auto problem = make_problem(s.cfg);
  auto net = fbsde_net(s.cfg, *problem);
  const auto c = s.load_model_checkpoint("fbsde");
  c.apply(net.named_parameters());
  if (!c.extra.empty()) {
    Checkpoint best;
    best.parameters = c.extra;
    for (auto& a : best.parameters) a.name = a.name.substr(5);
    best.apply(net.named_parameters());
    s.log << "evaluating the best-validation parameters\n";
  }
  const auto opts = fbsde_eval_options(s.cfg);

  std::vector<std::pair<std::string, fbsde::Evaluation>> results;
  results.emplace_back("fbsde", fbsde::evaluate_policy(*problem, net, opts));
  if (const auto* p = dynamic_cast<const problems::Portfolio*>(problem.get());
      p && s.cfg.flag("evaluation.baselines")) {
    for (auto kind : {problems::BaselineKind::Equal, problems::BaselineKind::Random}) {
      results.emplace_back(problems::to_string(kind),
                           fbsde::evaluate_baseline(*problem, problems::portfolio_baseline(*p, kind), opts));
    }
  }

  const std::size_t n = problem->state_dim(), m = problem->control_dim();
  std::vector<std::string> columns{"strategy", "rollout", "step"};
  for (std::size_t i = 0; i < n; ++i) columns.push_back("x" + std::to_string(i));
  for (std::size_t i = 0; i < m; ++i) columns.push_back("u" + std::to_string(i));
  CsvWriter traj(s.artifact("trajectories.csv"), columns);
  json summary = {{"problem", problem->name()}, {"rollouts", opts.rollouts}, {"strategies", json::object()}};
  for (const auto& [name, e] : results) {
    for (std::size_t r = 0; r < e.rollouts(); ++r) {
      for (std::size_t k = 0; k <= e.steps; ++k) {
        std::vector<std::string> cells{name, std::to_string(r), std::to_string(k)};
        for (std::size_t i = 0; i < n; ++i) cells.push_back(format_number(e.state(r, k, i)));
        for (std::size_t i = 0; i < m; ++i) {
          cells.push_back(k < e.steps ? format_number(e.controls[(r * e.steps + k) * m + i]) : "nan");
        }
        traj.row(cells);
      }
    }
    summary["strategies"][name] = strategy_summary(*problem, e);
    s.log << name << ": " << summary["strategies"][name].dump() << '\n';
  }
  CsvWriter table(s.artifact("evaluation.csv"), {"strategy", "metric", "value"});
  for (const auto& [name, metrics] : summary["strategies"].items()) {
    for (const auto& [metric, value] : metrics.items()) {
      table.row(std::vector<std::string>{name, metric, format_number(value.get<double>())});
    }
  }
  return s.result("fbsde-eval", summary);
}

// ---------------------------------------------------------------------------

json bench_impl(Session& s) {
  const auto opts = bench_options(s.cfg);
  const auto rows = bench_testfunctions(opts);
  CsvWriter csv(s.artifact("bench.csv"),
                {"function", "method", "sigma0", "evaluations", "successes", "trials", "rate", "mean_error"});
  json table = json::array();
  for (const auto& r : rows) {
    csv.row(std::vector<std::string>{r.function, r.method, format_number(r.sigma0), std::to_string(r.evaluations),
                                     std::to_string(r.successes), std::to_string(r.trials), format_number(r.rate()),
                                     format_number(r.mean_error)});
    table.push_back({{"function", r.function}, {"method", r.method}, {"sigma0", r.sigma0}, {"rate", r.rate()},
                     {"mean_error", r.mean_error}});
    s.log << r.function << ' ' << r.method << " sigma0 " << format_number(r.sigma0) << ": " << r.successes << '/'
          << r.trials << '\n';
  }
  return s.result("bench", {{"rows", table}});
}

template <class Impl>
json single(const RunConfig& cfg, std::ostream& log, const std::string& verb, Impl impl) {
  Session s(cfg, verb, log);
  json out = impl(s);
  s.finish();
  return out;
}

}  // namespace

json spen_train(const RunConfig& cfg, std::ostream& log) { return single(cfg, log, "spen-train", spen_train_impl); }
json spen_eval_sweep(const RunConfig& cfg, std::ostream& log) {
  return single(cfg, log, "spen-eval-sweep", spen_eval_sweep_impl);
}
json spen_landscape(const RunConfig& cfg, std::ostream& log) {
  return single(cfg, log, "spen-landscape", spen_landscape_impl);
}
json fbsde_train(const RunConfig& cfg, std::ostream& log) { return single(cfg, log, "fbsde-train", fbsde_train_impl); }
json fbsde_eval(const RunConfig& cfg, std::ostream& log) { return single(cfg, log, "fbsde-eval", fbsde_eval_impl); }
json bench(const RunConfig& cfg, std::ostream& log) { return single(cfg, log, "bench", bench_impl); }

json run(const RunConfig& cfg, std::ostream& log) {
  Session s(cfg, "run", log);
  const std::string exp = cfg.text("experiment");
  json out = json::object();
  if (exp == "spen") {
    out["spen-train"] = spen_train_impl(s);
    out["spen-eval-sweep"] = spen_eval_sweep_impl(s);
    out["spen-landscape"] = spen_landscape_impl(s);
  } else if (exp == "bench") {
    out["bench"] = bench_impl(s);
  } else {
    out["fbsde-train"] = fbsde_train_impl(s);
    out["fbsde-eval"] = fbsde_eval_impl(s);
  }
  s.finish();
  return out;
}

json inspect_checkpoint(const fs::path& path) { return Checkpoint::load(path).summary(); }

}  // namespace novas::harness
