#include "novas/nn/adam.hpp"

#include <cmath>
#include <set>

namespace novas::nn {

double LearningRateSchedule::at(long step) const {
  double lr = initial;
  for (long m : milestones) {
    if (step > m) lr *= factor;
  }
  return lr;
}

Adam::Adam(NamedParameters params, AdamOptions options)
    : params_(std::move(params)), options_(std::move(options)) {
  std::set<const TensorImpl*> seen;
  for (const auto& [name, p] : params_) {
    if (!p.requires_grad() || !p.is_leaf()) {
      throw std::invalid_argument("Adam: parameter '" + name + "' is not a trainable leaf");
    }
    if (!seen.insert(p.impl()).second) {
      throw std::invalid_argument("Adam: parameter '" + name + "' registered twice");
    }
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& [name, p] : params_) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("Adam: non-finite gradient in parameter '" + name + "'");
    }
  }
  ++step_;
  const double lr = options_.schedule.at(step_);
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor p = params_[k].second;
    auto data = p.mutable_data();
    const auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void Adam::restore(long step, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw std::invalid_argument("Adam::restore: moment count mismatch");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (m[k].size() != params_[k].second.numel() || v[k].size() != params_[k].second.numel()) {
      throw std::invalid_argument("Adam::restore: moment shape mismatch for '" + params_[k].first + "'");
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace novas::nn
