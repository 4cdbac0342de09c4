#pragma once

#include <functional>
#include <string>

#include "novas/core/ops.hpp"
#include "novas/core/random.hpp"

namespace novas::search {

enum class ShapeFunction {
  ExpSoftmax,    // S(y) = exp(kappa y), normalized as a softmax
  SigmoidElite,  // S(y) = (y - y_min) / (1 + exp(-kappa (y - gamma)))
};

enum class GraphMode {
  Detached,  // first N-1 iterations unrecorded, last one on the tape
  Unrolled,  // every iteration on the tape
};

// Which mean the stddev update is centred on.
enum class SigmaCenter { Updated, Previous };

ShapeFunction parse_shape(const std::string& name);
GraphMode parse_mode(const std::string& name);
std::string to_string(ShapeFunction shape);
std::string to_string(GraphMode mode);

struct NovasConfig {
  std::size_t samples = 100;     // M
  std::size_t iterations = 10;   // N
  double learning_rate = 1.0;    // alpha, in (0, 1]
  ShapeFunction shape = ShapeFunction::ExpSoftmax;
  double kappa = 5.0;
  // Sigmoid-eliteness threshold: gamma is the ceil(elite_fraction * M)-th
  // largest value.
  double elite_fraction = 0.1;
  double epsilon = 1e-3;         // variance floor
  bool normalize = true;         // min-max normalize values per row
  GraphMode mode = GraphMode::Detached;
  bool maximize = false;
  SigmaCenter sigma_center = SigmaCenter::Updated;

  void validate() const;
  std::size_t elite_count() const;
};

// Diagonal Gaussian search distribution, one row per batch element.
struct GaussianSearchState {
  Tensor mean;    // [batch, dim]
  Tensor stddev;  // [batch, dim], strictly positive

  static GaussianSearchState constant(std::size_t batch, std::size_t dim, double mean,
                                      double stddev);
  std::size_t batch() const { return mean.shape()[0]; }
  std::size_t dim() const { return mean.shape()[1]; }
  void validate() const;
};

// Maps candidates [batch, M, dim] to objective values [batch, M]. Must be pure.
using BatchedObjective = std::function<Tensor(const Tensor& candidates)>;

// Per-row (v - min) / (max - min); rows with max == min map to zeros and pass
// no gradient.
Tensor minmax_normalize(const Tensor& values);
// Per-row s / sum(s); rows summing to zero become uniform and pass no gradient.
Tensor normalize_rows(const Tensor& values);

// Sample weights [batch, M] from values already oriented for maximization.
// Rows are nonnegative and sum to one.
Tensor shape_weights(const Tensor& values, const NovasConfig& cfg);

// Standard normal draws [batch, M, dim]; row b comes from rng.split(b).
Tensor sample_standard_normal(std::size_t batch, std::size_t samples, std::size_t dim,
                              const RandomStream& rng);

// One adaptive-search update. Records on the tape only if grad mode is on.
GaussianSearchState novas_step(const GaussianSearchState& state, const BatchedObjective& objective,
                               const NovasConfig& cfg, const RandomStream& rng);

// Runs cfg.iterations steps from `init` (detached from the graph) and returns
// the final state. Iteration n draws from rng.split(n).
GaussianSearchState novas_search(const BatchedObjective& objective,
                                 const GaussianSearchState& init, const NovasConfig& cfg,
                                 const RandomStream& rng);

// Final search mean [batch, dim].
Tensor novas_optimize(const BatchedObjective& objective, const GaussianSearchState& init,
                      const NovasConfig& cfg, const RandomStream& rng);

// ---------------------------------------------------------------------------
// Baselines

struct CemConfig {
  std::size_t samples = 100;
  std::size_t iterations = 10;
  std::size_t elites = 10;
  double epsilon = 1e-3;
  bool maximize = false;

  void validate() const;
};

// Cross-entropy method: refit mean and diagonal stddev to the equally
// weighted top-k samples. Never recorded on the tape.
GaussianSearchState cem_step(const GaussianSearchState& state, const BatchedObjective& objective,
                             const CemConfig& cfg, const RandomStream& rng);
GaussianSearchState cem_search(const BatchedObjective& objective, const GaussianSearchState& init,
                               const CemConfig& cfg, const RandomStream& rng);

// Gradient of the inner objective with respect to the inner variable, built on
// the tape so that the unrolled iterates are differentiable.
using InputGradient = std::function<Tensor(const Tensor& y)>;

// `steps` recorded iterations of y <- y - lr * grad(y).
Tensor unrolled_gd(const InputGradient& gradient, const Tensor& y0, std::size_t steps, double lr);

}  // namespace novas::search
