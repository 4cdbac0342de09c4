#pragma once

#include <functional>
#include <vector>

#include "novas/core/ops.hpp"
#include "novas/core/random.hpp"

namespace novas {

struct GradCheckResult {
  double max_error = 0.0;     // |analytic - numeric| / max(1, |analytic|)
  std::size_t input = 0;      // location of the worst entry
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using TensorFunction = std::function<Tensor(const std::vector<Tensor>&)>;

// Contracts fn's output with a fixed random projection and compares tape
// gradients against central differences for every input element.
GradCheckResult gradcheck(const TensorFunction& fn, std::vector<Tensor> inputs, RandomStream& rng,
                          double step = 1e-5);

}  // namespace novas
