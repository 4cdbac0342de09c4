#pragma once

#include <string>

#include "novas/core/ops.hpp"
#include "novas/core/random.hpp"

namespace novas::fbsde {

struct TerminalCost {
  Tensor value;           // [B]
  Tensor gradient;        // [B, n]
  Tensor hessian_column;  // [B, n], column `SocProblem::hessian_column()` of the Hessian
};

// Controlled Ito process dx = f(x,u) dt + Sigma(x,u) dw with cost
// E[phi(x_T) + int l(x,u) dt]. All maps accept arbitrary leading batch axes:
// x is [..., n], u is [..., m].
class SocProblem {
 public:
  virtual ~SocProblem() = default;

  virtual std::string name() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t control_dim() const = 0;
  virtual std::size_t noise_dim() const = 0;
  virtual std::size_t steps() const = 0;
  virtual double horizon() const = 0;
  double dt() const { return horizon() / static_cast<double>(steps()); }

  virtual Tensor drift(const Tensor& x, const Tensor& u) const = 0;       // [..., n]
  virtual Tensor diffusion(const Tensor& x, const Tensor& u) const = 0;   // [..., n, v]
  virtual Tensor running_cost(const Tensor& x, const Tensor& u) const = 0;  // [...]
  virtual TerminalCost terminal(const Tensor& x) const = 0;
  virtual Tensor initial_state(std::size_t batch) const = 0;  // [B, n]

  virtual bool control_dependent_diffusion() const { return false; }
  // State coordinate whose Hessian column the value network predicts.
  virtual std::size_t hessian_column() const { return state_dim() - 1; }

  // Sigma(x, u) dw for x [B, n], u [B, m], dw [B, v].
  virtual Tensor diffuse(const Tensor& x, const Tensor& u, const Tensor& dw) const;

  // Hamiltonian 1/2 tr(V_xx Sigma Sigma^T) + V_x^T f + l for candidate
  // controls u [B, M, m] at states x [B, n], returning [B, M]. The trace term
  // is kept only when Sigma depends on u and a Hessian column is supplied; it
  // then uses the entries of tr(V_xx Sigma Sigma^T) that involve the predicted
  // column. Problems override this with closed-form fast paths.
  virtual Tensor hamiltonian(const Tensor& x, const Tensor& u, const Tensor& vx,
                             const Tensor& hessian_col) const;

  // Throws NumericError naming the step when the state left the domain.
  virtual void check_state(const Tensor& x, std::size_t step) const;
};

// The reference Hamiltonian, built directly from drift, diffusion and cost.
Tensor generic_hamiltonian(const SocProblem& problem, const Tensor& x, const Tensor& u,
                           const Tensor& vx, const Tensor& hessian_col);

}  // namespace novas::fbsde
