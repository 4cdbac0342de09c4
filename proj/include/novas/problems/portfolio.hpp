#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "novas/fbsde/fbsde.hpp"

namespace novas::problems {

// Stock prices S_i follow geometric Brownian motion with volatility matrix
// sigma; the wealth W is allocated by pi = softmax(u) over a risk-free asset
// (pi_1) and the traded stocks.
struct MarketParams {
  std::size_t stocks = 10;
  std::vector<std::size_t> traded;  // distinct stock indices
  double risk_free = 0.01;          // per year
  std::vector<double> drift;        // per stock, per year
  std::vector<double> volatility;   // [stocks x stocks] row-major, per sqrt(year)
  double initial_price = 1.0;
  double initial_wealth = 1.0;
  double cost_scale = 500.0;  // q
  double sharpness = 10.0;    // beta
  double horizon = 1.0;       // years
  std::size_t steps = 52;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static MarketParams from_json(const nlohmann::json& doc);
};

struct MarketOptions {
  std::size_t stocks = 10;
  std::size_t traded = 4;
  std::size_t factors = 3;
  double vol_low = 0.10;
  double vol_high = 0.40;
  double drift_low = -0.05;
  double drift_high = 0.10;
  double risk_free = 0.01;
  double horizon = 1.0;
  std::size_t steps = 52;
};

// Volatility matrix D L: L is the Cholesky factor of a factor-model
// correlation matrix (unit row norms), D holds per-stock volatilities drawn
// uniformly from [vol_low, vol_high]. factors == 0 gives a diagonal matrix.
Tensor synth_covariance(std::size_t stocks, RandomStream& rng, double vol_low, double vol_high,
                        std::size_t factors);

// Random market: drifts, volatility matrix and traded subset all derive from seed.
MarketParams generate_market(const MarketOptions& options, std::uint64_t seed);

class Portfolio : public fbsde::SocProblem {
 public:
  explicit Portfolio(MarketParams market);

  std::string name() const override { return "portfolio"; }
  std::size_t state_dim() const override { return market_.stocks + 1; }
  std::size_t control_dim() const override { return market_.traded.size() + 1; }
  std::size_t noise_dim() const override { return market_.stocks; }
  std::size_t steps() const override { return market_.steps; }
  double horizon() const override { return market_.horizon; }
  bool control_dependent_diffusion() const override { return true; }

  Tensor drift(const Tensor& x, const Tensor& u) const override;
  Tensor diffusion(const Tensor& x, const Tensor& u) const override;
  Tensor running_cost(const Tensor& x, const Tensor& u) const override;
  fbsde::TerminalCost terminal(const Tensor& x) const override;
  Tensor initial_state(std::size_t batch) const override;
  Tensor diffuse(const Tensor& x, const Tensor& u, const Tensor& dw) const override;
  // V_S^T (S mu) + W [V_W (pi_1 r + mu_T^T pi_s) + b^T pi_s] + 1/2 c_W W^2 pi_s^T C pi_s
  // with b = sigma_T sigma^T (c_S S), C = sigma_T sigma_T^T and c the predicted
  // wealth column of V_xx. Same value as the generic form.
  Tensor hamiltonian(const Tensor& x, const Tensor& u, const Tensor& vx,
                     const Tensor& hessian_col) const override;
  void check_state(const Tensor& x, std::size_t step) const override;

  Tensor allocation(const Tensor& u) const { return softmax(u, -1); }
  Tensor index(const Tensor& x) const;  // [...]
  Tensor wealth(const Tensor& x) const;  // [...]
  const MarketParams& market() const { return market_; }

 private:
  MarketParams market_;
  Tensor mu_;           // [N]
  Tensor sigma_;        // [N, N]
  Tensor traded_mu_;    // [M]
  Tensor traded_sigma_; // [M, N]
  Tensor cross_;        // sigma sigma_T^T, [N, M]
  Tensor traded_cov_;   // sigma_T sigma_T^T, [M, M]
};

// Reference allocations: Equal holds u = 0 (pi = 1/(M+1) each); Random draws
// u ~ N(0, 1) afresh at every step from the evaluation stream.
enum class BaselineKind { Equal, Random };
BaselineKind parse_baseline(const std::string& name);
std::string to_string(BaselineKind kind);
fbsde::ControlPolicy portfolio_baseline(const Portfolio& problem, BaselineKind kind);

}  // namespace novas::problems
