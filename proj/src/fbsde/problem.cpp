#include "novas/fbsde/problem.hpp"

#include <cmath>

namespace novas::fbsde {

Tensor SocProblem::diffuse(const Tensor& x, const Tensor& u, const Tensor& dw) const {
  const std::size_t batch = x.shape()[0];
  return sum(diffusion(x, u) * reshape(dw, {batch, 1, noise_dim()}), 2);
}

Tensor SocProblem::hamiltonian(const Tensor& x, const Tensor& u, const Tensor& vx,
                               const Tensor& hessian_col) const {
  return generic_hamiltonian(*this, x, u, vx, hessian_col);
}

void SocProblem::check_state(const Tensor& x, std::size_t step) const {
  for (double v : x.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(name() + ": non-finite state at step " + std::to_string(step));
    }
  }
}

Tensor generic_hamiltonian(const SocProblem& problem, const Tensor& x, const Tensor& u,
                           const Tensor& vx, const Tensor& hessian_col) {
  const std::size_t n = problem.state_dim();
  if (x.dim() != 2 || x.shape()[1] != n || u.dim() != 3 || u.shape()[0] != x.shape()[0] ||
      u.shape()[2] != problem.control_dim() || vx.shape() != x.shape()) {
    throw ShapeError("hamiltonian: x " + shape_string(x.shape()) + ", u " + shape_string(u.shape()) +
                     ", V_x " + shape_string(vx.shape()) + " are inconsistent for n=" +
                     std::to_string(n) + ", m=" + std::to_string(problem.control_dim()));
  }
  const std::size_t batch = x.shape()[0], samples = u.shape()[1];
  const Tensor xs = broadcast_to(reshape(x, {batch, 1, n}), {batch, samples, n});
  const Tensor grad = reshape(vx, {batch, 1, n});
  Tensor h = sum(problem.drift(xs, u) * grad, 2) + problem.running_cost(xs, u);
  if (hessian_col.defined() && problem.control_dependent_diffusion()) {
    const std::size_t w = problem.hessian_column();
    const Tensor sigma = problem.diffusion(xs, u);                // [B, M, n, v]
    const Tensor column = sum(sigma * slice(sigma, 2, w, w + 1), 3);  // (Sigma Sigma^T)[:, w]
    const Tensor c = reshape(hessian_col, {batch, 1, n});
    h = h + sum(c * column, 2) -
        reshape(slice(c, 2, w, w + 1) * slice(column, 2, w, w + 1), {batch, samples}) * 0.5;
  }
  return h;
}

}  // namespace novas::fbsde
