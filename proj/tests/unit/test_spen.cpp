#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "novas/core/gradcheck.hpp"
#include "novas/spen/spen.hpp"

using namespace novas;
using namespace novas::spen;
using doctest::Approx;

namespace {

// E = (y - c)^2, independent of x.
EnergyModel quadratic_energy(double c) {
  return {[c](const Tensor&, const Tensor& y) { return reshape(square(y - c), {y.shape()[0], y.shape()[1]}); },
          [c](const Tensor&, const Tensor& y) { return (y - c) * 2.0; }};
}

InnerOptions inner(InnerKind kind, std::size_t samples = 100, std::size_t iters = 10) {
  InnerOptions o;
  o.kind = kind;
  o.novas.samples = samples;
  o.novas.iterations = iters;
  return o;
}

RegressionDataset unit_scale() { return RegressionDataset{}; }

// Small net whose parameters are the given tensors, for gradient checks.
EnergyNet net_from(const std::vector<Tensor>& p) {
  std::vector<nn::Linear> layers;
  for (std::size_t i = 0; i + 1 < p.size(); i += 2) layers.emplace_back(p[i], p[i + 1]);
  return EnergyNet(nn::Mlp(layers, {nn::Activation::Softplus, nn::Activation::Softplus, nn::Activation::Identity}));
}

std::vector<Tensor> small_parameters(RandomStream& rng) {
  EnergyNet net(6, 2, rng);
  std::vector<Tensor> out;
  for (auto& [name, t] : net.named_parameters()) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("predict: quadratic energy recovers its minimizer") {
  const Tensor x = Tensor::vector({0.0, 1.0, 2.5, 4.0, 6.0});
  for (double c : {-1.7, 0.4, 2.2}) {
    const auto y = spen_predict(quadratic_energy(c), x, inner(InnerKind::Novas), RandomStream(3)).to_vector();
    for (double v : y) CHECK(std::abs(v - c) < 0.05);

    auto cem = inner(InnerKind::Cem);
    const auto yc = spen_predict(quadratic_energy(c), x, cem, RandomStream(4)).to_vector();
    for (double v : yc) CHECK(std::abs(v - c) < 0.05);

    auto gd = inner(InnerKind::GradientDescent);
    gd.gd_lr = 0.4;
    const auto yg = spen_predict(quadratic_energy(c), x, gd, RandomStream(5)).to_vector();
    for (double v : yg) CHECK(v == Approx(c).epsilon(1e-6));
  }
}

TEST_CASE("predict: constant energy leaves the mean at its start in expectation") {
  const EnergyModel flat{[](const Tensor&, const Tensor& y) { return Tensor::zeros({y.shape()[0], y.shape()[1]}); },
                         {}};
  auto o = inner(InnerKind::Novas);
  o.mean0 = 0.7;
  const auto y = spen_predict(flat, Tensor::zeros({500}), o, RandomStream(8)).to_vector();
  double mean = 0;
  for (double v : y) mean += v / static_cast<double>(y.size());
  CHECK(std::abs(mean - 0.7) < 0.06);
  CHECK_THROWS_AS(spen_predict(flat, Tensor::zeros({2}), inner(InnerKind::GradientDescent), RandomStream(1)),
                  std::invalid_argument);
}

TEST_CASE("energy net: shapes and input gradient") {
  RandomStream rng(2);
  EnergyNet net(8, 4, rng);
  CHECK(net.mlp().layers().size() == 5);
  const Tensor x = rng.uniform_tensor({3}, 0.0, 6.0);
  CHECK(net.energy(x, rng.normal_tensor({3, 7, 1})).shape() == Shape{3, 7});
  CHECK_THROWS_AS(net.energy(x, rng.normal_tensor({3, 7})), ShapeError);
  CHECK_THROWS_AS(net.energy(x, rng.normal_tensor({2, 7, 1})), ShapeError);

  NoGradGuard guard;
  const Tensor y = rng.normal_tensor({3, 1});
  const auto g = net.energy_gradient(x, y).to_vector();
  const double h = 1e-6;
  const auto up = net.energy(x, reshape(y + h, {3, 1, 1})).to_vector();
  const auto down = net.energy(x, reshape(y - h, {3, 1, 1})).to_vector();
  for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == Approx((up[i] - down[i]) / (2 * h)).epsilon(1e-6));

  const EnergyNet copy = net.clone();
  CHECK(copy.mlp().layers()[0].weight().impl() != net.mlp().layers()[0].weight().impl());
  CHECK(copy.mlp().layers()[0].weight().to_vector() == net.mlp().layers()[0].weight().to_vector());
}

TEST_CASE("predict: gradients of unrolled inner loops match finite differences") {
  RandomStream rng(21);
  const auto params = small_parameters(rng);
  const Tensor x = Tensor::vector({0.5, 2.0, 5.0});
  for (auto kind : {InnerKind::GradientDescent, InnerKind::Novas}) {
    auto o = inner(kind, 20, 3);
    o.novas.mode = search::GraphMode::Unrolled;
    o.gd_steps = 3;
    const auto fn = [&](const std::vector<Tensor>& p) {
      return spen_predict(net_from(p), x, o, RandomStream(6));
    };
    RandomStream check_rng(7);
    const auto result = gradcheck(fn, params, check_rng, 1e-6);
    CAPTURE(to_string(kind));
    CHECK(result.max_error < 1e-4);
  }
}

TEST_CASE("predict: every inner optimizer passes gradient to all weights") {
  RandomStream rng(30);
  EnergyNet net(6, 4, rng);
  const Tensor x = Tensor::vector({1.0, 3.0});
  for (auto kind : {InnerKind::Novas, InnerKind::Cem, InnerKind::GradientDescent}) {
    Tape::current().clear();
    for (auto& [name, t] : net.named_parameters()) t.zero_grad();
    sum_all(spen_predict(net, x, inner(kind, 30, 4), RandomStream(1))).backward();
    for (auto& [name, t] : net.named_parameters()) {
      CAPTURE(name);
      const auto g = t.grad();
      if (name == "energy.layers.4.bias") {
        // a constant energy offset cannot move the minimizer
        for (double v : g) CHECK(std::abs(v) < 1e-12);
      } else {
        CHECK(std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; }));
      }
    }
  }
  Tape::current().clear();
}

TEST_CASE("dataset: targets, disjoint splits, batches") {
  const auto d = RegressionDataset::generate(300, 80, 5);
  CHECK(d.train_x.size() == 300);
  CHECK(d.test_x.size() == 80);
  CHECK(d.valid_x.size() == 80);
  double mean = 0, var = 0;
  for (std::size_t i = 0; i < d.train_x.size(); ++i) {
    const double x = d.train_x[i];
    CHECK(x >= 0.0);
    CHECK(x <= 2 * std::numbers::pi);
    CHECK(d.restore(d.train_y[i]) == Approx(x * std::sin(x)).epsilon(1e-12));
    mean += d.train_y[i] / 300.0;
  }
  for (double y : d.train_y) var += (y - mean) * (y - mean) / 300.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < d.test_x.size(); ++i) {
    CHECK(d.test_y[i] == Approx(d.standardize(RegressionDataset::ground_truth(d.test_x[i]))).epsilon(1e-12));
  }

  const std::set<double> train(d.train_x.begin(), d.train_x.end());
  for (double x : d.test_x) CHECK(train.count(x) == 0);
  for (double x : d.valid_x) CHECK(train.count(x) == 0);

  const auto b1 = d.batches(64, 9, 1);
  CHECK(b1.size() == 5);
  CHECK(b1.back().size() == 300 - 4 * 64);
  std::vector<std::size_t> all;
  for (const auto& b : b1) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  CHECK(d.batches(64, 9, 1) == b1);
  CHECK(d.batches(64, 9, 2) != b1);
  CHECK_THROWS_AS(d.batches(0, 9, 1), std::invalid_argument);
  CHECK_THROWS_AS(RegressionDataset::generate(1, 5, 0), std::invalid_argument);
  CHECK(RegressionDataset::generate(300, 80, 5).test_x == d.test_x);
}

TEST_CASE("training: zero epochs, replay, sweep") {
  const auto data = RegressionDataset::generate(96, 32, 2);
  SpenTrainOptions o;
  o.batch = 32;
  o.inner = inner(InnerKind::Novas, 20, 3);
  o.seed = 4;

  RandomStream rng(12);
  EnergyNet net0(8, 4, rng);
  o.epochs = 0;
  const auto none = train_spen(net0, data, o);
  REQUIRE(none.size() == 1);
  CHECK(none[0].epoch == 0);
  CHECK(std::isfinite(none[0].test_loss));

  o.epochs = 3;
  RandomStream r1(12), r2(12);
  EnergyNet a(8, 4, r1), b(8, 4, r2);
  std::vector<std::size_t> seen;
  const auto ha = train_spen(a, data, o, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  const auto hb = train_spen(b, data, o);
  CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3});
  REQUIRE(ha.size() == hb.size());
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].train_loss == hb[i].train_loss);
    CHECK(ha[i].test_loss == hb[i].test_loss);
  }
  CHECK(ha.back().test_loss < ha.front().test_loss);

  CHECK(eval_altered_inner(a, data, o.inner, {}, 1).empty());
  const auto sweep = eval_altered_inner(a, data, o.inner, {1, 3, 6}, 1);
  CHECK(sweep.size() == 3);
  CHECK(sweep[1] == spen_test_loss(a, data, o.inner, RandomStream(1).split(1)));
  CHECK(eval_altered_inner(a, data, o.inner, {1, 3, 6}, 1) == sweep);
}

TEST_CASE("training: gradient-descent step size tuning keeps the best candidate") {
  const auto data = RegressionDataset::generate(64, 32, 3);
  SpenTrainOptions o;
  o.epochs = 2;
  o.batch = 32;
  o.seed = 1;
  RandomStream rng(5);
  EnergyNet net(8, 4, rng);
  const auto before = net.mlp().layers()[0].weight().to_vector();
  const auto tuned = tune_gd_lr(net, data, o, {0.01, 0.1, 0.5});
  REQUIRE(tuned.validation.size() == 3);
  const auto best = std::min_element(tuned.validation.begin(), tuned.validation.end());
  CHECK(tuned.best_lr == std::vector<double>{0.01, 0.1, 0.5}[best - tuned.validation.begin()]);
  CHECK(tuned.history.size() == 3);
  InnerOptions chosen = o.inner;
  chosen.kind = InnerKind::GradientDescent;
  chosen.gd_lr = tuned.best_lr;
  CHECK(spen_validation_loss(net, data, chosen, RandomStream(1).split(3)) == *best);
  CHECK(net.mlp().layers()[0].weight().to_vector() != before);
  CHECK_THROWS_AS(tune_gd_lr(net, data, o, {}), std::invalid_argument);
}

TEST_CASE("landscape: analytic energies") {
  const auto grid = linspace(0.0, 6.0, 61);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 6.0);
  CHECK(linspace(1.0, 2.0, 1) == std::vector<double>{1.0});
  CHECK(linspace(1.0, 2.0, 0).empty());

  const EnergyModel diagonal{[](const Tensor& x, const Tensor& y) {
                               const Tensor d = y - reshape(x, {x.shape()[0], 1, 1});
                               return reshape(square(d), {y.shape()[0], y.shape()[1]});
                             },
                             {}};
  const auto land = energy_landscape_grid(diagonal, unit_scale(), grid, grid);
  REQUIRE(land.argmin.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(land.argmin[i] == grid[i]);
    CHECK(land.log_energy[i * grid.size() + i] == 0.0);
  }
  for (double v : land.log_energy) CHECK(v >= 0.0);

  RandomStream rng(3);
  EnergyNet trained(4, 4, rng);
  std::vector<nn::Linear> layers;
  for (const auto& l : trained.mlp().layers()) layers.push_back(l.clone());
  layers.back() = nn::Linear(Tensor::zeros({1, 4}), Tensor::full({1}, 2.5));
  const EnergyNet constant(nn::Mlp(layers, trained.mlp().activations()));
  const auto flat = energy_landscape_grid(constant, RegressionDataset::generate(10, 2, 1), grid, grid);
  for (double v : flat.log_energy) CHECK(v == 0.0);

  const auto empty = energy_landscape_grid(diagonal, unit_scale(), {}, grid);
  CHECK(empty.log_energy.empty());
  CHECK(empty.argmin.empty());
}
