#include "novas/search/novas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace novas::search {

ShapeFunction parse_shape(const std::string& name) {
  if (name == "exp") return ShapeFunction::ExpSoftmax;
  if (name == "sigmoid") return ShapeFunction::SigmoidElite;
  throw std::invalid_argument("unknown shape function '" + name + "' (expected exp|sigmoid)");
}

GraphMode parse_mode(const std::string& name) {
  if (name == "detached") return GraphMode::Detached;
  if (name == "unrolled") return GraphMode::Unrolled;
  throw std::invalid_argument("unknown graph mode '" + name + "' (expected detached|unrolled)");
}

std::string to_string(ShapeFunction shape) {
  return shape == ShapeFunction::ExpSoftmax ? "exp" : "sigmoid";
}

std::string to_string(GraphMode mode) {
  return mode == GraphMode::Detached ? "detached" : "unrolled";
}

void NovasConfig::validate() const {
  if (samples < 2) throw std::invalid_argument("novas: samples must be >= 2");
  if (iterations < 1) throw std::invalid_argument("novas: iterations must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw std::invalid_argument("novas: learning rate must lie in (0, 1]");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("novas: epsilon must be positive");
  if (!(kappa > 0.0)) throw std::invalid_argument("novas: kappa must be positive");
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) {
    throw std::invalid_argument("novas: elite fraction must lie in (0, 1]");
  }
}

std::size_t NovasConfig::elite_count() const {
  const auto k = static_cast<std::size_t>(std::ceil(elite_fraction * static_cast<double>(samples)));
  return std::clamp<std::size_t>(k, 1, samples);
}

GaussianSearchState GaussianSearchState::constant(std::size_t batch, std::size_t dim, double mean,
                                                  double stddev) {
  return {Tensor::full({batch, dim}, mean), Tensor::full({batch, dim}, stddev)};
}

void GaussianSearchState::validate() const {
  if (!mean.defined() || !stddev.defined()) throw std::invalid_argument("search state is undefined");
  if (mean.dim() != 2 || mean.shape() != stddev.shape()) {
    throw ShapeError("search state mean " + shape_string(mean.shape()) + " and stddev " +
                     shape_string(stddev.shape()) + " must both be [batch, dim]");
  }
  for (double s : stddev.data()) {
    if (!(s > 0.0)) throw std::invalid_argument("search stddev must be strictly positive");
  }
}

// ---------------------------------------------------------------------------

Tensor minmax_normalize(const Tensor& values) {
  if (values.dim() != 2) throw ShapeError("minmax_normalize expects [batch, M]");
  const std::size_t rows = values.shape()[0], cols = values.shape()[1];
  const auto v = values.data();
  std::vector<double> out(v.size(), 0.0);
  std::vector<std::size_t> lo(rows), hi(rows);
  std::vector<double> range(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = v.subspan(r * cols, cols);
    lo[r] = static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
    hi[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    range[r] = row[hi[r]] - row[lo[r]];
    if (range[r] > 0.0) {
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (row[c] - row[lo[r]]) / range[r];
    }
  }
  auto in = values.impl_ptr();
  return make_result("minmax_normalize", values.shape(), std::move(out), {values},
                     [in, rows, cols, lo, hi, range](const TensorImpl& res) {
                       auto& g_in = in->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (!(range[r] > 0.0)) continue;
                         double total = 0.0, weighted = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double g = res.grad[r * cols + c];
                           total += g;
                           weighted += g * res.data[r * cols + c];
                           g_in[r * cols + c] += g / range[r];
                         }
                         g_in[r * cols + lo[r]] += (weighted - total) / range[r];
                         g_in[r * cols + hi[r]] -= weighted / range[r];
                       }
                     });
}

Tensor normalize_rows(const Tensor& values) {
  if (values.dim() != 2) throw ShapeError("normalize_rows expects [batch, M]");
  const std::size_t rows = values.shape()[0], cols = values.shape()[1];
  const auto v = values.data();
  std::vector<double> out(v.size());
  std::vector<double> totals(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double t = 0.0;
    for (std::size_t c = 0; c < cols; ++c) t += v[r * cols + c];
    totals[r] = t;
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = t > 0.0 ? v[r * cols + c] / t : 1.0 / static_cast<double>(cols);
    }
  }
  auto in = values.impl_ptr();
  return make_result("normalize_rows", values.shape(), std::move(out), {values},
                     [in, rows, cols, totals](const TensorImpl& res) {
                       auto& g_in = in->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (!(totals[r] > 0.0)) continue;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c)
                           dot += res.grad[r * cols + c] * res.data[r * cols + c];
                         for (std::size_t c = 0; c < cols; ++c)
                           g_in[r * cols + c] += (res.grad[r * cols + c] - dot) / totals[r];
                       }
                     });
}

Tensor shape_weights(const Tensor& values, const NovasConfig& cfg) {
  if (values.dim() != 2) {
    throw ShapeError("shape_weights expects [batch, M], got " + shape_string(values.shape()));
  }
  for (double v : values.data()) {
    if (std::isnan(v)) throw NumericError("shape_weights: NaN objective value");
  }
  const Tensor y = cfg.normalize ? minmax_normalize(values) : values;
  switch (cfg.shape) {
    case ShapeFunction::ExpSoftmax:
      return softmax(y * cfg.kappa, 1);
    case ShapeFunction::SigmoidElite: {
      const std::size_t k = std::min(
          values.shape()[1],
          std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(
                                       cfg.elite_fraction * static_cast<double>(values.shape()[1])))));
      const Tensor gamma = kth_largest(y, 1, k, true);
      const Tensor floor = min(y, 1, true);
      const Tensor s = (y - floor) * sigmoid((y - gamma) * cfg.kappa);
      return normalize_rows(s);
    }
  }
  throw std::logic_error("unhandled shape function");
}

Tensor sample_standard_normal(std::size_t batch, std::size_t samples, std::size_t dim,
                              const RandomStream& rng) {
  std::vector<double> z(batch * samples * dim);
  for (std::size_t b = 0; b < batch; ++b) {
    RandomStream row = rng.split(b);
    for (std::size_t i = 0; i < samples * dim; ++i) z[b * samples * dim + i] = row.normal();
  }
  return Tensor::from({batch, samples, dim}, std::move(z));
}

namespace {

Tensor evaluate(const BatchedObjective& objective, const Tensor& candidates) {
  const std::size_t batch = candidates.shape()[0], samples = candidates.shape()[1];
  Tensor values = objective(candidates);
  if (!values.defined() || values.shape() != Shape{batch, samples}) {
    throw ShapeError("objective returned " +
                     (values.defined() ? shape_string(values.shape()) : std::string("nothing")) +
                     ", expected " + shape_string({batch, samples}));
  }
  return values;
}

}  // namespace

GaussianSearchState novas_step(const GaussianSearchState& state, const BatchedObjective& objective,
                               const NovasConfig& cfg, const RandomStream& rng) {
  cfg.validate();
  state.validate();
  const std::size_t batch = state.batch(), dim = state.dim(), samples = cfg.samples;

  const Tensor z = sample_standard_normal(batch, samples, dim, rng);
  const Tensor mu = reshape(state.mean, {batch, 1, dim});
  const Tensor sigma = reshape(state.stddev, {batch, 1, dim});
  const Tensor x = mu + sigma * z;

  Tensor values = evaluate(objective, x);
  if (!cfg.maximize) values = -values;
  const Tensor w = reshape(shape_weights(values, cfg), {batch, samples, 1});

  Tensor mean = state.mean + sum(w * (x - mu), 1) * cfg.learning_rate;
  const Tensor center =
      cfg.sigma_center == SigmaCenter::Updated ? reshape(mean, {batch, 1, dim}) : mu;
  Tensor stddev = sqrt(sum(w * square(x - center), 1) + cfg.epsilon);
  return {std::move(mean), std::move(stddev)};
}

GaussianSearchState novas_search(const BatchedObjective& objective,
                                 const GaussianSearchState& init, const NovasConfig& cfg,
                                 const RandomStream& rng) {
  cfg.validate();
  init.validate();
  GaussianSearchState state{init.mean.detach(), init.stddev.detach()};
  for (std::size_t n = 0; n < cfg.iterations; ++n) {
    const bool off_graph = cfg.mode == GraphMode::Detached && n + 1 < cfg.iterations;
    if (off_graph) {
      NoGradGuard guard;
      state = novas_step(state, objective, cfg, rng.split(n));
    } else {
      state = novas_step(state, objective, cfg, rng.split(n));
    }
  }
  return state;
}

Tensor novas_optimize(const BatchedObjective& objective, const GaussianSearchState& init,
                      const NovasConfig& cfg, const RandomStream& rng) {
  return novas_search(objective, init, cfg, rng).mean;
}

// ---------------------------------------------------------------------------

void CemConfig::validate() const {
  if (samples < 2) throw std::invalid_argument("cem: samples must be >= 2");
  if (iterations < 1) throw std::invalid_argument("cem: iterations must be >= 1");
  if (elites < 1 || elites > samples) {
    throw std::invalid_argument("cem: elite count " + std::to_string(elites) + " outside [1, " +
                                std::to_string(samples) + "]");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("cem: epsilon must be positive");
}

GaussianSearchState cem_step(const GaussianSearchState& state, const BatchedObjective& objective,
                             const CemConfig& cfg, const RandomStream& rng) {
  cfg.validate();
  state.validate();
  NoGradGuard guard;
  const std::size_t batch = state.batch(), dim = state.dim(), samples = cfg.samples;
  const Tensor z = sample_standard_normal(batch, samples, dim, rng);
  const Tensor x = reshape(state.mean, {batch, 1, dim}) + reshape(state.stddev, {batch, 1, dim}) * z;
  const Tensor values = evaluate(objective, x);
  const auto v = values.data();
  const auto xs = x.data();

  std::vector<double> mean(batch * dim, 0.0), stddev(batch * dim, 0.0);
  std::vector<std::size_t> order(samples);
  const double inv_k = 1.0 / static_cast<double>(cfg.elites);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t m = 0; m < samples; ++m) {
      if (std::isnan(v[b * samples + m])) throw NumericError("cem: NaN objective value");
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto better = [&](std::size_t l, std::size_t r) {
      const double fl = v[b * samples + l], fr = v[b * samples + r];
      if (fl != fr) return cfg.maximize ? fl > fr : fl < fr;
      return l < r;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.elites),
                      order.end(), better);
    for (std::size_t j = 0; j < dim; ++j) {
      double mu = 0.0;
      for (std::size_t e = 0; e < cfg.elites; ++e) mu += xs[(b * samples + order[e]) * dim + j];
      mu *= inv_k;
      double var = 0.0;
      for (std::size_t e = 0; e < cfg.elites; ++e) {
        const double d = xs[(b * samples + order[e]) * dim + j] - mu;
        var += d * d;
      }
      mean[b * dim + j] = mu;
      stddev[b * dim + j] = std::sqrt(var * inv_k + cfg.epsilon);
    }
  }
  return {Tensor::from({batch, dim}, std::move(mean)), Tensor::from({batch, dim}, std::move(stddev))};
}

GaussianSearchState cem_search(const BatchedObjective& objective, const GaussianSearchState& init,
                               const CemConfig& cfg, const RandomStream& rng) {
  GaussianSearchState state{init.mean.detach(), init.stddev.detach()};
  for (std::size_t n = 0; n < cfg.iterations; ++n) state = cem_step(state, objective, cfg, rng.split(n));
  return state;
}

Tensor unrolled_gd(const InputGradient& gradient, const Tensor& y0, std::size_t steps, double lr) {
  Tensor y = y0;
  for (std::size_t s = 0; s < steps; ++s) {
    const Tensor g = gradient(y);
    if (g.shape() != y.shape()) {
      throw ShapeError("unrolled_gd: gradient shape " + shape_string(g.shape()) +
                       " differs from iterate shape " + shape_string(y.shape()));
    }
    for (double v : g.data()) {
      if (!std::isfinite(v)) {
        throw NumericError("unrolled_gd: non-finite inner gradient at step " + std::to_string(s));
      }
    }
    y = y - g * lr;
  }
  return y;
}

}  // namespace novas::search
