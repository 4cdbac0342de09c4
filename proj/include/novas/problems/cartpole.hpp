#pragma once

#include <array>
#include <numbers>

#include "novas/fbsde/problem.hpp"

namespace novas::problems {

struct CartPoleParams {
  double pole_mass = 0.01;   // kg
  double cart_mass = 1.0;    // kg
  double pole_length = 0.5;  // m
  double gravity = 9.81;     // m/s^2
  double noise = 0.5;        // stddev on both velocity channels
  double control_cost = 0.1;
  std::array<double, 4> state_cost{0.0, 10.0, 3.0, 0.5};
  std::array<double, 4> target{0.0, std::numbers::pi, 0.0, 0.0};
  double horizon = 1.5;
  std::size_t steps = 75;

  void validate() const;
};

// State [x, theta, x_dot, theta_dot], scalar force u. Quadratic running and
// terminal cost (s - target)^T Q (s - target), plus R u^2 while running.
class CartPole : public fbsde::SocProblem {
 public:
  explicit CartPole(CartPoleParams params = {});

  std::string name() const override { return "cartpole"; }
  std::size_t state_dim() const override { return 4; }
  std::size_t control_dim() const override { return 1; }
  std::size_t noise_dim() const override { return 2; }
  std::size_t steps() const override { return params_.steps; }
  double horizon() const override { return params_.horizon; }

  Tensor drift(const Tensor& x, const Tensor& u) const override;
  Tensor diffusion(const Tensor& x, const Tensor& u) const override;
  Tensor running_cost(const Tensor& x, const Tensor& u) const override;
  fbsde::TerminalCost terminal(const Tensor& x) const override;
  Tensor initial_state(std::size_t batch) const override;
  Tensor diffuse(const Tensor& x, const Tensor& u, const Tensor& dw) const override;
  // H(u) = c + a u + R u^2 with a = V_x^T G(x), c = V_x^T F(x) + q(x).
  Tensor hamiltonian(const Tensor& x, const Tensor& u, const Tensor& vx,
                     const Tensor& hessian_col) const override;

  // Control-affine split f = F(x) + G(x) u, both [..., 4].
  std::pair<Tensor, Tensor> affine_split(const Tensor& x) const;
  Tensor state_cost(const Tensor& x) const;  // [...]

  const CartPoleParams& params() const { return params_; }

 private:
  CartPoleParams params_;
  Tensor q_;       // [4]
  Tensor target_;  // [4]
};

// Stationary point of the implemented Hamiltonian: u* = -G^T V_x / (2R).
// x and vx are [B, 4]; returns [B, 1].
Tensor cartpole_optimal_control(const CartPole& problem, const Tensor& x, const Tensor& vx);

}  // namespace novas::problems
