#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "novas/problems/cartpole.hpp"
#include "novas/problems/portfolio.hpp"

using namespace novas;
using namespace novas::problems;
using doctest::Approx;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  const auto x = a.to_vector(), y = b.to_vector();
  REQUIRE(x.size() == y.size());
  double out = 0;
  for (std::size_t i = 0; i < x.size(); ++i) out = std::max(out, std::abs(x[i] - y[i]));
  return out;
}

Tensor random_cartpole_states(RandomStream& rng, std::size_t batch) {
  return rng.normal_tensor({batch, 4}) * Tensor::vector({1.0, 2.0, 1.5, 3.0});
}

MarketParams small_market(std::uint64_t seed = 3) {
  MarketOptions o;
  o.stocks = 6;
  o.traded = 3;
  return generate_market(o, seed);
}

Tensor portfolio_states(const Portfolio& p, RandomStream& rng, std::size_t batch) {
  return exp(rng.normal_tensor({batch, p.state_dim()}) * 0.2);
}

// Mechanical energy of a cart-pole with the pole angle measured from hanging down.
double mechanical_energy(const CartPoleParams& p, const std::vector<double>& s) {
  const double xd = s[2], td = s[3], th = s[1];
  return 0.5 * (p.cart_mass + p.pole_mass) * xd * xd + p.pole_mass * p.pole_length * xd * td * std::cos(th) +
         0.5 * p.pole_mass * p.pole_length * p.pole_length * td * td -
         p.pole_mass * p.gravity * p.pole_length * std::cos(th);
}

}  // namespace

TEST_CASE("cart-pole: dynamics examples") {
  const CartPole cp;
  const auto f = cp.drift(Tensor::zeros({1, 4}), Tensor::full({1, 1}, 1.0)).to_vector();
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);
  CHECK(f[2] == Approx(1.0).epsilon(1e-15));
  CHECK(f[3] == Approx(-2.0).epsilon(1e-15));

  const auto rest = cp.drift(Tensor::from({1, 4}, {0.3, 0.0, 0.0, 0.0}), Tensor::zeros({1, 1})).to_vector();
  CHECK(rest[2] == 0.0);
  CHECK(rest[3] == 0.0);

  RandomStream rng(1);
  const Tensor x = random_cartpole_states(rng, 5);
  const Tensor u = rng.normal_tensor({5, 1});
  const auto sig = cp.diffusion(x, u);
  CHECK(sig.shape() == Shape{5, 4, 2});
  for (std::size_t b = 0; b < 5; ++b) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(sig.at({b, i, j}) == (i >= 2 && i - 2 == j ? 0.5 : 0.0));
      }
    }
  }

  // Control-affine split and the direct formula agree.
  const auto [F, G] = cp.affine_split(x);
  CHECK(max_abs_diff(F + G * u, cp.drift(x, u)) < 1e-14);
  const auto xs = x.to_vector();
  const auto gs = G.to_vector();
  for (std::size_t b = 0; b < 5; ++b) {
    const double den = 1.0 + 0.01 * std::sin(xs[b * 4 + 1]);
    CHECK(gs[b * 4 + 2] == Approx(1.0 / den).epsilon(1e-14));
    CHECK(gs[b * 4 + 3] == Approx(-std::cos(xs[b * 4 + 1]) / (0.5 * den)).epsilon(1e-14));
  }

  const Tensor dw = rng.normal_tensor({5, 2});
  const Tensor direct = sum(sig * reshape(dw, {5, 1, 2}), 2);
  CHECK(max_abs_diff(cp.diffuse(x, u, dw), direct) < 1e-15);

  CartPoleParams bad;
  bad.pole_mass = 0.0;
  CHECK_THROWS_AS(CartPole{bad}, std::invalid_argument);
  bad = {};
  bad.control_cost = 0.0;
  CHECK_THROWS_AS(CartPole{bad}, std::invalid_argument);
}

TEST_CASE("cart-pole: costs and terminal derivatives") {
  const CartPole cp;
  const Tensor target = Tensor::from({1, 4}, {0.0, std::numbers::pi, 0.0, 0.0});
  const auto at_target = cp.terminal(target);
  CHECK(at_target.value.item() == 0.0);
  for (double g : at_target.gradient.to_vector()) CHECK(g == 0.0);

  const Tensor x = Tensor::from({1, 4}, {1.0, 0.0, 2.0, -1.0});
  const double q = 10 * std::numbers::pi * std::numbers::pi + 3 * 4 + 0.5;
  CHECK(cp.state_cost(x).item() == Approx(q).epsilon(1e-14));
  CHECK(cp.running_cost(x, Tensor::full({1, 1}, 2.0)).item() == Approx(q + 0.4).epsilon(1e-14));
  const auto t = cp.terminal(x);
  const auto g = t.gradient.to_vector();
  CHECK(g[1] == Approx(-20 * std::numbers::pi).epsilon(1e-14));
  CHECK(g[2] == Approx(12.0).epsilon(1e-14));
  CHECK(t.hessian_column.to_vector() == std::vector<double>{0, 0, 0, 1.0});
}

TEST_CASE("cart-pole: closed-form control") {
  const CartPole cp;
  RandomStream rng(5);
  const Tensor x = random_cartpole_states(rng, 16);
  const Tensor vx = rng.normal_tensor({16, 4});
  for (double u : cartpole_optimal_control(cp, x, Tensor::zeros({16, 4})).to_vector()) CHECK(u == 0.0);
  const auto u1 = cartpole_optimal_control(cp, x, vx).to_vector();
  const auto u2 = cartpole_optimal_control(cp, x, vx * 2.0).to_vector();
  for (std::size_t i = 0; i < 16; ++i) CHECK(u2[i] == Approx(2 * u1[i]).epsilon(1e-14));

  // Stationary point of the generic Hamiltonian, by central differences.
  const Tensor ustar = reshape(cartpole_optimal_control(cp, x, vx), {16, 1, 1});
  const double h = 1e-4;
  const auto up = fbsde::generic_hamiltonian(cp, x, ustar + h, vx, Tensor()).to_vector();
  const auto mid = fbsde::generic_hamiltonian(cp, x, ustar, vx, Tensor()).to_vector();
  const auto down = fbsde::generic_hamiltonian(cp, x, ustar - h, vx, Tensor()).to_vector();
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(std::abs((up[i] - down[i]) / (2 * h)) < 1e-8);
    CHECK(up[i] > mid[i]);
    CHECK(down[i] > mid[i]);
  }
}

TEST_CASE("cart-pole: fast Hamiltonian equals the generic one") {
  const CartPole cp;
  RandomStream rng(6);
  const Tensor x = random_cartpole_states(rng, 8);
  const Tensor vx = rng.normal_tensor({8, 4});
  const Tensor u = rng.normal_tensor({8, 13, 1}) * 5.0;
  const Tensor fast = cp.hamiltonian(x, u, vx, Tensor());
  CHECK(fast.shape() == Shape{8, 13});
  CHECK(max_abs_diff(fast, fbsde::generic_hamiltonian(cp, x, u, vx, Tensor())) < 1e-10);
}

TEST_CASE("cart-pole: search matches the closed-form minimizer") {
  const CartPole cp;
  RandomStream rng(7);
  const std::size_t batch = 100;
  const Tensor x = random_cartpole_states(rng, batch);
  const Tensor vx = rng.normal_tensor({batch, 4});
  search::NovasConfig cfg;
  cfg.samples = 200;
  cfg.iterations = 50;
  const auto objective = [&](const Tensor& u) { return cp.hamiltonian(x, u, vx, Tensor()); };
  const auto found =
      search::novas_optimize(objective, search::GaussianSearchState::constant(batch, 1, 0.0, 10.0), cfg,
                             RandomStream(8))
          .to_vector();
  const auto exact = cartpole_optimal_control(cp, x, vx).to_vector();
  std::size_t misses = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (std::abs(found[i] - exact[i]) > 1e-2 * (1 + std::abs(exact[i]))) ++misses;
  }
  CHECK(misses == 0);
}

TEST_CASE("cart-pole: unforced, noiseless energy changes at first order in the step") {
  // The equations of motion used here are not derived from a Lagrangian, so
  // energy is not conserved; the check is that the per-step change shrinks
  // linearly with the step size (no injection beyond discretization).
  RandomStream rng(9);
  const Tensor x = random_cartpole_states(rng, 20);
  const Tensor u = Tensor::zeros({20, 1});
  std::vector<double> ratio;
  for (double dt : {0.02, 0.01, 0.005}) {
    CartPoleParams p;
    p.noise = 0.0;
    const CartPole cp(p);
    const auto next = (x + cp.drift(x, u) * dt).to_vector();
    const auto now = x.to_vector();
    double worst = 0;
    for (std::size_t b = 0; b < 20; ++b) {
      const std::vector<double> a(now.begin() + b * 4, now.begin() + b * 4 + 4);
      const std::vector<double> c(next.begin() + b * 4, next.begin() + b * 4 + 4);
      worst = std::max(worst, std::abs(mechanical_energy(p, c) - mechanical_energy(p, a)) / dt);
    }
    ratio.push_back(worst);
  }
  CHECK(ratio[1] == Approx(ratio[0]).epsilon(0.1));
  CHECK(ratio[2] == Approx(ratio[1]).epsilon(0.1));
}

TEST_CASE("portfolio: terminal cost examples and derivatives") {
  const Portfolio p(small_market());
  const std::size_t n = p.state_dim();
  const auto at_par = p.terminal(p.initial_state(1));
  CHECK(at_par.value.item() == Approx(2.40227).epsilon(1e-5));
  CHECK(at_par.value.item() == Approx(500 * std::pow(std::log(2.0) / 10, 2)).epsilon(1e-13));
  // d phi / dW at I = W is -q log(2) / beta.
  CHECK(at_par.gradient.at({0, n - 1}) == Approx(-34.657).epsilon(2e-5));
  CHECK(at_par.gradient.at({0, n - 1}) == Approx(-500 * std::log(2.0) / 10).epsilon(1e-13));

  std::vector<double> rich(n, 1.0);
  rich[n - 1] = 5.0;
  CHECK(p.terminal(Tensor::from({1, n}, rich)).value.item() < 1e-30);

  RandomStream rng(10);
  const Tensor x = portfolio_states(p, rng, 6);
  const auto t = p.terminal(x);
  const double h = 1e-6;
  for (std::size_t b = 0; b < 6; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      auto xp = x.to_vector(), xm = x.to_vector();
      xp[b * n + i] += h;
      xm[b * n + i] -= h;
      const auto tp = p.terminal(Tensor::from({6, n}, xp)), tm = p.terminal(Tensor::from({6, n}, xm));
      const double fd = (tp.value.to_vector()[b] - tm.value.to_vector()[b]) / (2 * h);
      CHECK(t.gradient.at({b, i}) == Approx(fd).epsilon(1e-6));
      // wealth column of the Hessian, from differences of the gradient
      const double fd2 = (tp.gradient.at({b, n - 1}) - tm.gradient.at({b, n - 1})) / (2 * h);
      CHECK(t.hessian_column.at({b, i}) == Approx(fd2).epsilon(1e-5));
    }
  }
}

TEST_CASE("portfolio: allocation and dynamics") {
  const auto market = small_market();
  const Portfolio p(market);
  const std::size_t n = p.state_dim(), m = p.control_dim();
  for (double w : p.allocation(Tensor::zeros({1, m})).to_vector()) CHECK(w == Approx(1.0 / m).epsilon(1e-15));

  RandomStream rng(11);
  const auto pi = p.allocation(rng.normal_tensor({50, m}) * 30.0);
  for (std::size_t b = 0; b < 50; ++b) {
    double total = 0;
    for (std::size_t j = 0; j < m; ++j) {
      CHECK(pi.at({b, j}) >= 0.0);
      total += pi.at({b, j});
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }

  // Everything in the risk-free asset: W grows at r.
  std::vector<double> u(m, 0.0);
  u[0] = 60.0;
  const Tensor x = p.initial_state(2);
  const Tensor drift = p.drift(x, Tensor::from({1, m}, u) + Tensor::zeros({2, m}));
  CHECK(drift.at({0, n - 1}) == Approx(market.risk_free).epsilon(1e-12));
  const Tensor next = x + drift * p.dt();
  CHECK(next.at({1, n - 1}) == Approx(1.0 + market.risk_free * p.dt()).epsilon(1e-12));

  // Stock rows: drift S mu, diffusion S sigma.
  const Tensor xs = portfolio_states(p, rng, 3);
  const Tensor ur = rng.normal_tensor({3, m});
  const auto f = p.drift(xs, ur);
  const auto sig = p.diffusion(xs, ur);
  CHECK(sig.shape() == Shape{3, n, n - 1});
  const auto pis = p.allocation(ur);
  for (std::size_t b = 0; b < 3; ++b) {
    const double w = xs.at({b, n - 1});
    double wealth_drift = pis.at({b, 0}) * market.risk_free;
    for (std::size_t k = 0; k < market.traded.size(); ++k) {
      wealth_drift += pis.at({b, k + 1}) * market.drift[market.traded[k]];
    }
    CHECK(f.at({b, n - 1}) == Approx(w * wealth_drift).epsilon(1e-13));
    for (std::size_t i = 0; i + 1 < n; ++i) {
      CHECK(f.at({b, i}) == Approx(xs.at({b, i}) * market.drift[i]).epsilon(1e-13));
      double row = 0;
      for (std::size_t k = 0; k < market.traded.size(); ++k) {
        row += pis.at({b, k + 1}) * market.volatility[market.traded[k] * (n - 1) + i];
      }
      CHECK(sig.at({b, n - 1, i}) == Approx(w * row).epsilon(1e-13));
      for (std::size_t j = 0; j + 1 < n; ++j) {
        CHECK(sig.at({b, i, j}) == Approx(xs.at({b, i}) * market.volatility[i * (n - 1) + j]).epsilon(1e-13));
      }
    }
  }
  const Tensor dw = rng.normal_tensor({3, n - 1});
  const Tensor direct = sum(sig * reshape(dw, {3, 1, n - 1}), 2);
  CHECK(max_abs_diff(p.diffuse(xs, ur, dw), direct) < 1e-14);

  std::vector<double> broke(n, 1.0);
  broke[n - 1] = -0.1;
  CHECK_THROWS_AS(p.check_state(Tensor::from({1, n}, broke), 4), NumericError);
  broke[n - 1] = 1.0;
  broke[0] = 0.0;
  CHECK_THROWS_AS(p.check_state(Tensor::from({1, n}, broke), 4), NumericError);
  CHECK_NOTHROW(p.check_state(p.initial_state(3), 0));
}

TEST_CASE("portfolio: zero volatility and the index") {
  auto market = small_market();
  std::fill(market.volatility.begin(), market.volatility.end(), 0.0);
  const Portfolio p(market);
  const std::size_t n = p.state_dim(), m = p.control_dim();
  Tensor x = p.initial_state(1);
  double index = p.index(x).item();
  const auto mu = market.drift;
  double mean_mu = 0;
  for (double v : mu) mean_mu += v / static_cast<double>(mu.size());
  for (std::size_t k = 0; k < p.steps(); ++k) {
    const Tensor next = x + p.drift(x, Tensor::zeros({1, m})) * p.dt() +
                        p.diffuse(x, Tensor::zeros({1, m}), Tensor::zeros({1, n - 1}));
    index += p.index(next - x).item();  // incremental update
    x = next;
    CHECK(std::abs(index - p.index(x).item()) < 1e-10);
  }
  // With unit initial prices each stock compounds at its own drift.
  double expected = 0;
  for (double v : mu) expected += std::pow(1 + v * p.dt(), static_cast<double>(p.steps())) / mu.size();
  CHECK(p.index(x).item() == Approx(expected).epsilon(1e-12));
  CHECK(expected > 1.0 + mean_mu * p.horizon() - 1e-3);
}

TEST_CASE("portfolio: fast Hamiltonian equals the generic one") {
  const Portfolio p(small_market(4));
  RandomStream rng(12);
  const Tensor x = portfolio_states(p, rng, 5);
  const Tensor vx = rng.normal_tensor({5, p.state_dim()});
  const Tensor hc = rng.normal_tensor({5, p.state_dim()});
  const Tensor u = rng.normal_tensor({5, 9, p.control_dim()}) * 2.0;
  const Tensor fast = p.hamiltonian(x, u, vx, hc);
  CHECK(fast.shape() == Shape{5, 9});
  CHECK(max_abs_diff(fast, fbsde::generic_hamiltonian(p, x, u, vx, hc)) < 1e-10);
  CHECK(max_abs_diff(p.hamiltonian(x, u, Tensor::zeros({5, p.state_dim()}), Tensor::zeros({5, p.state_dim()})),
                     Tensor::zeros({5, 9})) == 0.0);
}

TEST_CASE("synthetic covariance") {
  for (std::size_t factors : {0, 1, 3}) {
    RandomStream rng(13 + factors);
    const Tensor sigma = synth_covariance(12, rng, 0.10, 0.40, factors);
    REQUIRE(sigma.shape() == Shape{12, 12});
    Eigen::MatrixXd s(12, 12);
    for (std::size_t i = 0; i < 12; ++i) {
      double norm = 0;
      for (std::size_t j = 0; j < 12; ++j) {
        s(i, j) = sigma.at({i, j});
        norm += s(i, j) * s(i, j);
        if (factors == 0 && i != j) CHECK(s(i, j) == 0.0);
        if (j > i) CHECK(s(i, j) == 0.0);  // lower triangular
      }
      CHECK(std::sqrt(norm) >= 0.10);
      CHECK(std::sqrt(norm) <= 0.40);
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s * s.transpose());
    CHECK(eig.eigenvalues().minCoeff() >= -1e-14);
  }
}

TEST_CASE("market generation and serialization") {
  const auto a = small_market(21), b = small_market(21), c = small_market(22);
  CHECK(a.drift == b.drift);
  CHECK(a.volatility == b.volatility);
  CHECK(a.traded == b.traded);
  CHECK(a.drift != c.drift);
  CHECK(a.traded.size() == 3);
  CHECK(std::set<std::size_t>(a.traded.begin(), a.traded.end()).size() == 3);
  for (auto t : a.traded) CHECK(t < 6);
  for (double d : a.drift) {
    CHECK(d >= -0.05);
    CHECK(d <= 0.10);
  }

  const auto round = MarketParams::from_json(nlohmann::json::parse(a.to_json().dump()));
  CHECK(round.drift == a.drift);
  CHECK(round.volatility == a.volatility);
  CHECK(round.traded == a.traded);
  CHECK(round.steps == a.steps);
  CHECK(round.seed == a.seed);
  CHECK(round.cost_scale == a.cost_scale);

  auto bad = a;
  bad.traded = {1, 1, 2};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = a;
  bad.traded = {0, 1, 2, 3, 4, 5};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = a;
  bad.volatility.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  auto doc = a.to_json();
  doc.erase("drift");
  CHECK_THROWS(MarketParams::from_json(doc));
}

TEST_CASE("portfolio baselines") {
  const Portfolio p(small_market());
  const std::size_t m = p.control_dim();
  CHECK(parse_baseline("equal") == BaselineKind::Equal);
  CHECK(to_string(parse_baseline("random")) == "random");
  CHECK_THROWS_AS(parse_baseline("greedy"), std::invalid_argument);

  fbsde::EvaluationOptions eval;
  eval.rollouts = 16;
  eval.chunk = 8;
  eval.seed = 3;
  const auto equal = fbsde::evaluate_baseline(p, portfolio_baseline(p, BaselineKind::Equal), eval);
  for (double u : equal.controls) CHECK(u == 0.0);

  const auto r1 = fbsde::evaluate_baseline(p, portfolio_baseline(p, BaselineKind::Random), eval);
  const auto r2 = fbsde::evaluate_baseline(p, portfolio_baseline(p, BaselineKind::Random), eval);
  CHECK(r1.controls == r2.controls);
  CHECK(r1.terminal_cost == r2.terminal_cost);
  // fresh draws at every step
  CHECK(r1.controls[0] != r1.controls[m]);
}

TEST_CASE("portfolio baselines: comparable costs without drift, wealth stays positive") {
  auto market = small_market(5);
  std::fill(market.drift.begin(), market.drift.end(), 0.0);
  market.risk_free = 0.0;
  const std::size_t stocks = market.stocks;
  std::fill(market.volatility.begin(), market.volatility.end(), 0.0);
  for (std::size_t i = 0; i < stocks; ++i) market.volatility[i * stocks + i] = 0.25;
  const Portfolio p(market);
  fbsde::EvaluationOptions eval;
  eval.rollouts = 64;
  eval.seed = 17;
  const auto eq = fbsde::evaluate_baseline(p, portfolio_baseline(p, BaselineKind::Equal), eval).terminal_moments();
  const auto rn = fbsde::evaluate_baseline(p, portfolio_baseline(p, BaselineKind::Random), eval).terminal_moments();
  const double se = std::sqrt((eq.stddev * eq.stddev + rn.stddev * rn.stddev) / 64.0);
  CHECK(std::abs(eq.mean - rn.mean) < 3 * se);

  // Generated market at desk scale: no absorbing failures over many rollouts.
  const Portfolio desk(generate_market({}, 8));
  eval.rollouts = 256;
  const auto e = fbsde::evaluate_baseline(desk, portfolio_baseline(desk, BaselineKind::Random), eval);
  for (std::size_t r = 0; r < e.rollouts(); ++r) CHECK(e.state(r, e.steps, desk.state_dim() - 1) > 0.0);
}
