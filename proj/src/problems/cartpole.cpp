#include "novas/problems/cartpole.hpp"

namespace novas::problems {

void CartPoleParams::validate() const {
  if (!(pole_mass > 0 && cart_mass > 0 && pole_length > 0 && gravity > 0)) {
    throw std::invalid_argument("cartpole: masses, length and gravity must be positive");
  }
  if (!(control_cost > 0)) throw std::invalid_argument("cartpole: control cost R must be positive");
  if (noise < 0) throw std::invalid_argument("cartpole: noise must be nonnegative");
  if (!(horizon > 0) || steps == 0) throw std::invalid_argument("cartpole: empty horizon");
}

CartPole::CartPole(CartPoleParams params) : params_(params) {
  params_.validate();
  q_ = Tensor::vector({params_.state_cost.begin(), params_.state_cost.end()});
  target_ = Tensor::vector({params_.target.begin(), params_.target.end()});
}

std::pair<Tensor, Tensor> CartPole::affine_split(const Tensor& x) const {
  const double mp = params_.pole_mass, mc = params_.cart_mass, l = params_.pole_length,
               g = params_.gravity;
  const Tensor theta = slice(x, -1, 1, 2);
  const Tensor x_dot = slice(x, -1, 2, 3);
  const Tensor theta_dot = slice(x, -1, 3, 4);
  const Tensor s = sin(theta), c = cos(theta);
  const Tensor denom = s * mp + mc;
  const Tensor zero = Tensor::zeros(theta.shape());
  const Tensor f = concat({x_dot, theta_dot, s * mp * (theta_dot * l + c * g) / denom,
                           -(theta_dot * c * s) * (mp * l) / (denom * l)},
                          -1);
  const Tensor gain = concat({zero, zero, 1.0 / denom, -c / (denom * l)}, -1);
  return {f, gain};
}

Tensor CartPole::drift(const Tensor& x, const Tensor& u) const {
  const auto [f, gain] = affine_split(x);
  return f + gain * u;
}

Tensor CartPole::diffusion(const Tensor& x, const Tensor& u) const {
  (void)u;
  const double s = params_.noise;
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  shape.push_back(4);
  shape.push_back(2);
  return broadcast_to(Tensor::from({4, 2}, {0, 0, 0, 0, s, 0, 0, s}), shape);
}

Tensor CartPole::diffuse(const Tensor& x, const Tensor& u, const Tensor& dw) const {
  (void)u;
  return concat({Tensor::zeros({x.shape()[0], 2}), dw * params_.noise}, 1);
}

Tensor CartPole::state_cost(const Tensor& x) const { return sum(square(x - target_) * q_, -1); }

Tensor CartPole::running_cost(const Tensor& x, const Tensor& u) const {
  return state_cost(x) + sum(square(u), -1) * params_.control_cost;
}

fbsde::TerminalCost CartPole::terminal(const Tensor& x) const {
  const std::size_t w = hessian_column();
  std::vector<double> column(4, 0.0);
  column[w] = 2.0 * params_.state_cost[w];
  return {state_cost(x), (x - target_) * q_ * 2.0,
          broadcast_to(Tensor::vector(column), x.shape())};
}

Tensor CartPole::initial_state(std::size_t batch) const { return Tensor::zeros({batch, 4}); }

Tensor CartPole::hamiltonian(const Tensor& x, const Tensor& u, const Tensor& vx,
                             const Tensor& hessian_col) const {
  (void)hessian_col;
  if (x.dim() != 2 || x.shape()[1] != 4 || vx.shape() != x.shape() || u.dim() != 3 ||
      u.shape()[2] != 1 || u.shape()[0] != x.shape()[0]) {
    throw ShapeError("cartpole hamiltonian: x " + shape_string(x.shape()) + ", u " +
                     shape_string(u.shape()) + ", V_x " + shape_string(vx.shape()));
  }
  const std::size_t batch = x.shape()[0], samples = u.shape()[1];
  const auto [f, gain] = affine_split(x);
  const Tensor linear = reshape(sum(vx * gain, 1), {batch, 1});
  const Tensor constant = reshape(sum(vx * f, 1) + state_cost(x), {batch, 1});
  const Tensor v = reshape(u, {batch, samples});
  return constant + linear * v + square(v) * params_.control_cost;
}

Tensor cartpole_optimal_control(const CartPole& problem, const Tensor& x, const Tensor& vx) {
  const double r = problem.params().control_cost;
  if (!(r > 0)) throw std::invalid_argument("closed-form control needs R > 0");
  const auto [f, gain] = problem.affine_split(x);
  return sum(vx * gain, 1, true) * (-0.5 / r);
}

}  // namespace novas::problems
