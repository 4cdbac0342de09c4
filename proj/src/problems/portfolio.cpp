#include "novas/problems/portfolio.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace novas::problems {

void MarketParams::validate() const {
  if (stocks == 0) throw std::invalid_argument("market: no stocks");
  if (traded.empty() || traded.size() >= stocks) {
    throw std::invalid_argument("market: need 0 < traded (" + std::to_string(traded.size()) +
                                ") < stocks (" + std::to_string(stocks) + ")");
  }
  if (std::set<std::size_t>(traded.begin(), traded.end()).size() != traded.size()) {
    throw std::invalid_argument("market: traded indices must be distinct");
  }
  for (auto i : traded) {
    if (i >= stocks) throw std::invalid_argument("market: traded index out of range");
  }
  if (drift.size() != stocks) throw std::invalid_argument("market: drift needs one entry per stock");
  if (volatility.size() != stocks * stocks) {
    throw std::invalid_argument("market: volatility must be stocks x stocks");
  }
  if (!(initial_price > 0 && initial_wealth > 0)) {
    throw std::invalid_argument("market: initial price and wealth must be positive");
  }
  if (!(cost_scale > 0 && sharpness > 0)) throw std::invalid_argument("market: q and beta must be positive");
  if (!(horizon > 0) || steps == 0) throw std::invalid_argument("market: empty horizon");
}

nlohmann::json MarketParams::to_json() const {
  return {{"stocks", stocks},
          {"traded", traded},
          {"risk_free", risk_free},
          {"drift", drift},
          {"volatility", volatility},
          {"initial_price", initial_price},
          {"initial_wealth", initial_wealth},
          {"cost_scale", cost_scale},
          {"sharpness", sharpness},
          {"horizon", horizon},
          {"steps", steps},
          {"seed", seed}};
}

MarketParams MarketParams::from_json(const nlohmann::json& doc) {
  MarketParams m;
  m.stocks = doc.at("stocks").get<std::size_t>();
  m.traded = doc.at("traded").get<std::vector<std::size_t>>();
  m.risk_free = doc.at("risk_free").get<double>();
  m.drift = doc.at("drift").get<std::vector<double>>();
  m.volatility = doc.at("volatility").get<std::vector<double>>();
  m.initial_price = doc.at("initial_price").get<double>();
  m.initial_wealth = doc.at("initial_wealth").get<double>();
  m.cost_scale = doc.at("cost_scale").get<double>();
  m.sharpness = doc.at("sharpness").get<double>();
  m.horizon = doc.at("horizon").get<double>();
  m.steps = doc.at("steps").get<std::size_t>();
  m.seed = doc.at("seed").get<std::uint64_t>();
  m.validate();
  return m;
}

Tensor synth_covariance(std::size_t stocks, RandomStream& rng, double vol_low, double vol_high,
                        std::size_t factors) {
  if (!(vol_low > 0 && vol_high >= vol_low)) {
    throw std::invalid_argument("synth_covariance: volatility range must be positive");
  }
  using Matrix = Eigen::MatrixXd;
  Matrix corr = Matrix::Identity(static_cast<Eigen::Index>(stocks), static_cast<Eigen::Index>(stocks));
  if (factors > 0) {
    Matrix loadings(stocks, factors);
    for (std::size_t i = 0; i < stocks; ++i) {
      // A broad market factor with positive loadings, then sector-like factors.
      loadings(i, 0) = rng.uniform(0.3, 0.8);
      for (std::size_t f = 1; f < factors; ++f) loadings(i, f) = 0.3 * rng.normal();
    }
    Matrix cov = loadings * loadings.transpose();
    for (std::size_t i = 0; i < stocks; ++i) cov(i, i) += rng.uniform(0.2, 0.6);
    const Eigen::VectorXd scale = cov.diagonal().cwiseSqrt().cwiseInverse();
    corr = scale.asDiagonal() * cov * scale.asDiagonal();
  }
  const Matrix lower = corr.llt().matrixL();
  std::vector<double> out(stocks * stocks);
  for (std::size_t i = 0; i < stocks; ++i) {
    const double vol = rng.uniform(vol_low, vol_high);
    for (std::size_t j = 0; j < stocks; ++j) out[i * stocks + j] = vol * lower(i, j);
  }
  return Tensor::from({stocks, stocks}, std::move(out));
}

MarketParams generate_market(const MarketOptions& options, std::uint64_t seed) {
  if (options.traded == 0 || options.traded >= options.stocks) {
    throw std::invalid_argument("market: need 0 < traded < stocks");
  }
  RandomStream root(seed);
  MarketParams m;
  m.stocks = options.stocks;
  m.risk_free = options.risk_free;
  m.horizon = options.horizon;
  m.steps = options.steps;
  m.seed = seed;

  RandomStream drift_rng = root.split(0);
  for (std::size_t i = 0; i < m.stocks; ++i) {
    m.drift.push_back(drift_rng.uniform(options.drift_low, options.drift_high));
  }
  RandomStream vol_rng = root.split(1);
  const Tensor sigma = synth_covariance(m.stocks, vol_rng, options.vol_low, options.vol_high, options.factors);
  m.volatility = sigma.to_vector();

  std::vector<std::size_t> order(m.stocks);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream pick = root.split(2);
  std::shuffle(order.begin(), order.end(), pick);
  m.traded.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(options.traded));
  std::sort(m.traded.begin(), m.traded.end());
  m.validate();
  return m;
}

Portfolio::Portfolio(MarketParams market) : market_(std::move(market)) {
  market_.validate();
  const std::size_t n = market_.stocks, k = market_.traded.size();
  mu_ = Tensor::vector(market_.drift);
  sigma_ = Tensor::from({n, n}, market_.volatility);
  std::vector<double> tmu, tsig;
  for (auto i : market_.traded) {
    tmu.push_back(market_.drift[i]);
    tsig.insert(tsig.end(), market_.volatility.begin() + static_cast<std::ptrdiff_t>(i * n),
                market_.volatility.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  }
  traded_mu_ = Tensor::vector(tmu);
  traded_sigma_ = Tensor::from({k, n}, tsig);
  cross_ = matmul(sigma_, transpose(traded_sigma_));
  traded_cov_ = matmul(traded_sigma_, transpose(traded_sigma_));
}

namespace {

// Applies a [p, q] matrix on the last axis of t [..., p] -> [..., q].
Tensor apply_last(const Tensor& t, const Tensor& matrix) {
  const std::size_t p = t.shape().back();
  const std::size_t rows = t.numel() / p;
  Shape out(t.shape().begin(), t.shape().end() - 1);
  out.push_back(matrix.shape()[1]);
  return reshape(matmul(reshape(t, {rows, p}), matrix), out);
}

}  // namespace

Tensor Portfolio::index(const Tensor& x) const {
  return mean(slice(x, -1, 0, market_.stocks), -1);
}

Tensor Portfolio::wealth(const Tensor& x) const {
  const std::size_t n = market_.stocks;
  return reshape(slice(x, -1, n, n + 1), Shape(x.shape().begin(), x.shape().end() - 1));
}

Tensor Portfolio::drift(const Tensor& x, const Tensor& u) const {
  const std::size_t n = market_.stocks, m = control_dim();
  const Tensor pi = allocation(u);
  const Tensor stocks = slice(x, -1, 0, n);
  const Tensor w = slice(x, -1, n, n + 1);
  const Tensor growth = slice(pi, -1, 0, 1) * market_.risk_free +
                        sum(slice(pi, -1, 1, m) * traded_mu_, -1, true);
  return concat({stocks * mu_, w * growth}, -1);
}

Tensor Portfolio::diffusion(const Tensor& x, const Tensor& u) const {
  const std::size_t n = market_.stocks, m = control_dim();
  const Tensor pi = allocation(u);
  Shape lead(x.shape().begin(), x.shape().end() - 1);
  Shape col = lead, row = lead;
  col.insert(col.end(), {n, 1});
  row.insert(row.end(), {1, n});
  Shape one = lead;
  one.insert(one.end(), {1, 1});
  const Tensor stock_rows = reshape(slice(x, -1, 0, n), col) * sigma_;
  const Tensor wealth_row =
      reshape(slice(x, -1, n, n + 1), one) * reshape(apply_last(slice(pi, -1, 1, m), traded_sigma_), row);
  return concat({stock_rows, wealth_row}, -2);
}

Tensor Portfolio::diffuse(const Tensor& x, const Tensor& u, const Tensor& dw) const {
  const std::size_t n = market_.stocks, m = control_dim();
  const Tensor shocks = matmul(dw, transpose(sigma_));               // [B, N]
  const Tensor traded_shocks = matmul(dw, transpose(traded_sigma_));  // [B, M]
  const Tensor pi_s = slice(allocation(u), 1, 1, m);
  return concat({slice(x, 1, 0, n) * shocks,
                 slice(x, 1, n, n + 1) * sum(pi_s * traded_shocks, 1, true)},
                1);
}

Tensor Portfolio::running_cost(const Tensor& x, const Tensor& u) const {
  (void)u;
  return Tensor::zeros(Shape(x.shape().begin(), x.shape().end() - 1));
}

fbsde::TerminalCost Portfolio::terminal(const Tensor& x) const {
  const std::size_t n = market_.stocks;
  const double q = market_.cost_scale, beta = market_.sharpness;
  const std::size_t batch = x.shape()[0];
  const Tensor gap = reshape(index(x) - wealth(x), {batch, 1});  // I - W
  const Tensor soft = softplus(gap * beta) / beta;
  const Tensor sig = sigmoid(gap * beta);
  const Tensor slope = soft * sig * (2.0 * q);                                  // d phi / d gap
  const Tensor curve = (square(sig) + soft * beta * sig * (1.0 - sig)) * (2.0 * q);  // d2 phi / d gap2
  const Tensor per_stock = Tensor::full({1, n}, 1.0 / static_cast<double>(n));
  return {reshape(square(soft) * q, {batch}), concat({slope * per_stock, -slope}, 1),
          concat({-(curve * per_stock), curve}, 1)};
}

Tensor Portfolio::initial_state(std::size_t batch) const {
  const std::size_t n = market_.stocks;
  std::vector<double> row(n, market_.initial_price);
  row.push_back(market_.initial_wealth);
  return broadcast_to(Tensor::from({1, n + 1}, row), {batch, n + 1}).clone();
}

Tensor Portfolio::hamiltonian(const Tensor& x, const Tensor& u, const Tensor& vx,
                              const Tensor& hessian_col) const {
  const std::size_t n = market_.stocks, m = control_dim();
  if (x.dim() != 2 || x.shape()[1] != n + 1 || vx.shape() != x.shape() || u.dim() != 3 ||
      u.shape()[2] != m || u.shape()[0] != x.shape()[0]) {
    throw ShapeError("portfolio hamiltonian: x " + shape_string(x.shape()) + ", u " +
                     shape_string(u.shape()) + ", V_x " + shape_string(vx.shape()));
  }
  const std::size_t batch = x.shape()[0];
  const Tensor pi = allocation(u);  // [B, M, m]
  const Tensor pi_s = slice(pi, 2, 1, m);
  const Tensor stocks = slice(x, 1, 0, n);
  const Tensor w = slice(x, 1, n, n + 1);  // [B, 1]
  const Tensor v_w = slice(vx, 1, n, n + 1);
  const Tensor growth = reshape(slice(pi, 2, 0, 1), {batch, u.shape()[1]}) * market_.risk_free +
                        sum(pi_s * traded_mu_, 2);  // [B, M]
  Tensor h = sum(slice(vx, 1, 0, n) * stocks * mu_, 1, true) + w * v_w * growth;
  if (hessian_col.defined()) {
    const Tensor b = matmul(slice(hessian_col, 1, 0, n) * stocks, cross_);  // [B, m-1]
    const Tensor c_w = slice(hessian_col, 1, n, n + 1);
    const Tensor quad = sum(apply_last(pi_s, traded_cov_) * pi_s, 2);       // [B, M]
    h = h + w * sum(pi_s * reshape(b, {batch, 1, m - 1}), 2) + c_w * square(w) * quad * 0.5;
  }
  return h;
}

void Portfolio::check_state(const Tensor& x, std::size_t step) const {
  for (double v : x.data()) {
    if (!(v > 0) || !std::isfinite(v)) {
      throw NumericError("portfolio: nonpositive or non-finite price/wealth at step " +
                         std::to_string(step) + " (absorbing failure)");
    }
  }
}

BaselineKind parse_baseline(const std::string& name) {
  if (name == "equal") return BaselineKind::Equal;
  if (name == "random") return BaselineKind::Random;
  throw std::invalid_argument("unknown baseline '" + name + "' (expected equal|random)");
}

std::string to_string(BaselineKind kind) { return kind == BaselineKind::Equal ? "equal" : "random"; }

fbsde::ControlPolicy portfolio_baseline(const Portfolio& problem, BaselineKind kind) {
  const std::size_t m = problem.control_dim();
  if (kind == BaselineKind::Equal) {
    return [m](std::size_t, const Tensor& x, const RandomStream&) { return Tensor::zeros({x.shape()[0], m}); };
  }
  return [m](std::size_t, const Tensor& x, const RandomStream& stream) {
    RandomStream rng = stream;
    return rng.normal_tensor({x.shape()[0], m});
  };
}

}  // namespace novas::problems
