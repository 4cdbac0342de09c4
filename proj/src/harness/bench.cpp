#include "novas/harness/bench.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace novas::harness {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<TestFunction> build() {
  std::vector<TestFunction> out;
  out.push_back({"quadratic", 2, {1.5, -0.5}, -5.0, 5.0, 0.1,
                 [](const double* x) { return std::pow(x[0] - 1.5, 2) + std::pow(x[1] + 0.5, 2); },
                 [](const double* x, double* g) {
                   g[0] = 2.0 * (x[0] - 1.5);
                   g[1] = 2.0 * (x[1] + 0.5);
                 }});
  // 0.1 (x - 1)^2 + sin^2(3 (x - 1)): global minimum 0 at x = 1, local minima
  // near 1 + k pi / 3.
  out.push_back({"multimodal", 1, {1.0}, -5.0, 5.0, 0.02,
                 [](const double* x) {
                   const double d = x[0] - 1.0;
                   return 0.1 * d * d + std::pow(std::sin(3.0 * d), 2);
                 },
                 [](const double* x, double* g) {
                   const double d = x[0] - 1.0;
                   g[0] = 0.2 * d + 3.0 * std::sin(6.0 * d);
                 }});
  out.push_back({"rastrigin", 2, {0.0, 0.0}, -5.12, 5.12, 0.002,
                 [](const double* x) {
                   double f = 20.0;
                   for (int i = 0; i < 2; ++i) f += x[i] * x[i] - 10.0 * std::cos(2.0 * kPi * x[i]);
                   return f;
                 },
                 [](const double* x, double* g) {
                   for (int i = 0; i < 2; ++i) g[i] = 2.0 * x[i] + 20.0 * kPi * std::sin(2.0 * kPi * x[i]);
                 }});
  return out;
}

search::BatchedObjective batched(const TestFunction& fn) {
  return [&fn](const Tensor& candidates) {
    const auto& s = candidates.shape();
    const auto data = candidates.data();
    std::vector<double> values(s[0] * s[1]);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = fn.value(data.data() + i * fn.dim);
    return Tensor::from({s[0], s[1]}, std::move(values));
  };
}

double distance(const TestFunction& fn, const double* x) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < fn.dim; ++i) d2 += std::pow(x[i] - fn.optimum[i], 2);
  return std::sqrt(d2);
}

BenchRow score(const TestFunction& fn, std::string method, double sigma0, std::size_t evaluations,
               const std::vector<double>& finals, std::size_t trials, double tolerance) {
  BenchRow row{fn.name, std::move(method), sigma0, evaluations, 0, trials, 0.0};
  for (std::size_t t = 0; t < trials; ++t) {
    const double d = distance(fn, finals.data() + t * fn.dim);
    row.mean_error += d / static_cast<double>(trials);
    if (d < tolerance) ++row.successes;
  }
  return row;
}

}  // namespace

const std::vector<TestFunction>& test_functions() {
  static const std::vector<TestFunction> fns = build();
  return fns;
}

const TestFunction& test_function(const std::string& name) {
  for (const auto& fn : test_functions()) {
    if (fn.name == name) return fn;
  }
  throw std::invalid_argument("unknown test function '" + name + "'");
}

std::vector<BenchRow> bench_function(const TestFunction& fn, const BenchOptions& options) {
  NoGradGuard guard;
  const std::size_t trials = options.trials, dim = fn.dim;
  const std::size_t budget = options.novas.samples * options.novas.iterations;
  const RandomStream root(options.seed);

  std::vector<double> starts(trials * dim);
  for (std::size_t t = 0; t < trials; ++t) {
    RandomStream rng = root.split(0).split(t);
    for (std::size_t i = 0; i < dim; ++i) starts[t * dim + i] = rng.uniform(fn.start_low, fn.start_high);
  }
  const Tensor mean0 = Tensor::from({trials, dim}, starts);
  const auto objective = batched(fn);

  std::vector<BenchRow> rows;
  auto run_novas = [&](double sigma0) {
    search::NovasConfig cfg = options.novas;
    cfg.maximize = false;
    const search::GaussianSearchState init{mean0, Tensor::full({trials, dim}, sigma0)};
    const auto final = search::novas_search(objective, init, cfg, root.split(1));
    rows.push_back(score(fn, "novas", sigma0, budget, final.mean.to_vector(), trials, options.tolerance));
  };
  run_novas(options.sigma0);
  {
    search::CemConfig cfg{options.novas.samples, options.novas.iterations, options.cem_elites,
                          options.novas.epsilon, false};
    const search::GaussianSearchState init{mean0, Tensor::full({trials, dim}, options.sigma0)};
    const auto final = search::cem_search(objective, init, cfg, root.split(2));
    rows.push_back(score(fn, "cem", options.sigma0, budget, final.mean.to_vector(), trials, options.tolerance));
  }
  {
    std::vector<double> x = starts, g(dim);
    for (std::size_t t = 0; t < trials; ++t) {
      double* xt = x.data() + t * dim;
      for (std::size_t k = 0; k < budget; ++k) {
        fn.gradient(xt, g.data());
        for (std::size_t i = 0; i < dim; ++i) xt[i] -= fn.gd_lr * g[i];
      }
    }
    rows.push_back(score(fn, "gd", 0.0, budget, x, trials, options.tolerance));
  }
  for (double s : options.sigma_sweep) run_novas(s);
  return rows;
}

std::vector<BenchRow> bench_testfunctions(const BenchOptions& options) {
  std::vector<BenchRow> rows;
  for (const auto& fn : test_functions()) {
    auto part = bench_function(fn, options);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

}  // namespace novas::harness
