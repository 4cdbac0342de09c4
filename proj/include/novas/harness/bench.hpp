#pragma once

#include <functional>
#include <string>
#include <vector>

#include "novas/search/novas.hpp"

namespace novas::harness {

// A minimization test problem with a known global minimizer.
struct TestFunction {
  std::string name;
  std::size_t dim;
  std::vector<double> optimum;
  double start_low, start_high;  // random starts are uniform in this box
  double gd_lr;                  // stable step size for gradient descent
  std::function<double(const double*)> value;
  std::function<void(const double*, double*)> gradient;
};

// Shifted quadratic (2-D), 1-D sin-composite with many local minima, and a
// 2-D Rastrigin function.
const std::vector<TestFunction>& test_functions();
const TestFunction& test_function(const std::string& name);

struct BenchOptions {
  search::NovasConfig novas;  // samples and iterations also drive CEM
  double sigma0 = 3.0;
  std::vector<double> sigma_sweep;  // extra NOVAS runs with these sigma0
  std::size_t cem_elites = 10;
  std::size_t trials = 100;
  double tolerance = 1e-2;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string function;
  std::string method;  // novas | cem | gd
  double sigma0 = 0.0;  // 0 for gd
  std::size_t evaluations = 0;  // objective (or gradient) evaluations per trial
  std::size_t successes = 0;
  std::size_t trials = 0;
  double mean_error = 0.0;  // mean distance of the final iterate to the optimum

  double rate() const { return trials ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0; }
};

// Every method starts trial t from the same random point. Gradient descent
// gets as many gradient evaluations as the samplers get objective values.
std::vector<BenchRow> bench_function(const TestFunction& fn, const BenchOptions& options);
std::vector<BenchRow> bench_testfunctions(const BenchOptions& options);

}  // namespace novas::harness
