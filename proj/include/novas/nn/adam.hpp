#pragma once

#include <vector>

#include "novas/nn/layers.hpp"

namespace novas::nn {

// Piecewise-constant decay: lr(t) = initial * factor^(#milestones < t), where
// t is the 1-based update index.
struct LearningRateSchedule {
  double initial = 1e-3;
  std::vector<long> milestones;
  double factor = 0.1;

  double at(long step) const;
};

struct AdamOptions {
  LearningRateSchedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(NamedParameters params, AdamOptions options);

  // Applies one update from the parameters' accumulated gradients. A
  // parameter without a gradient is treated as having a zero gradient.
  void step();
  void zero_grad();

  long steps() const { return step_; }
  double current_lr() const { return options_.schedule.at(step_ + 1); }
  const NamedParameters& parameters() const { return params_; }

  // Moment buffers in parameter order, for checkpointing.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(long step, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  NamedParameters params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long step_ = 0;
};

}  // namespace novas::nn
