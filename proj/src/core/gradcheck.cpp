#include "novas/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace novas {

GradCheckResult gradcheck(const TensorFunction& fn, std::vector<Tensor> inputs, RandomStream& rng,
                          double step) {
  for (auto& t : inputs) {
    t = t.detach();
    t.set_requires_grad();
  }
  Tape::current().clear();
  const Tensor out = fn(inputs);
  const Tensor projection = rng.normal_tensor(out.shape());
  sum_all(out * projection).backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    const auto g = t.grad();
    analytic.emplace_back(t.has_grad() ? std::vector<double>(g.begin(), g.end())
                                       : std::vector<double>(t.numel(), 0.0));
  }
  Tape::current().clear();

  NoGradGuard guard;
  auto objective = [&] { return sum_all(fn(inputs) * projection).item(); };
  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].mutable_data();
    for (std::size_t e = 0; e < data.size(); ++e) {
      const double saved = data[e];
      data[e] = saved + step;
      const double up = objective();
      data[e] = saved - step;
      const double down = objective();
      data[e] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i][e];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (err >= result.max_error) result = {err, i, e, a, numeric};
    }
  }
  return result;
}

}  // namespace novas
