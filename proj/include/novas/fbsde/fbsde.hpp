#pragma once

#include <array>
#include <functional>
#include <optional>

#include "novas/fbsde/problem.hpp"
#include "novas/nn/adam.hpp"
#include "novas/nn/lstm.hpp"
#include "novas/search/novas.hpp"

namespace novas::fbsde {

struct NetworkOptions {
  std::size_t hidden = 16;
  std::size_t layers = 2;
  bool hessian_head = false;
  bool trainable_initial_gradient = false;  // V_x,0 as a free parameter
  double initial_value = 0.0;
  // LSTM input is (x - input_shift) * input_scale; empty means identity.
  std::vector<double> input_shift;
  std::vector<double> input_scale;
};

// LSTM trunk over the state with affine heads for V_x and, optionally, one
// column of V_xx. V_0 is a trainable scalar.
class FbsdeNetwork {
 public:
  struct State {
    std::vector<Tensor> hidden;
    std::vector<Tensor> cell;
  };
  struct Output {
    Tensor value_gradient;  // [B, n]
    Tensor hessian_column;  // [B, n] or undefined
  };

  FbsdeNetwork(std::size_t state_dim, NetworkOptions options, RandomStream& rng);

  State initial_state(std::size_t batch) const;
  // Consumes x_k [B, n]; `first` selects the trainable V_x,0 when enabled.
  Output step(const Tensor& x, State& state, bool first) const;
  Tensor initial_value(std::size_t batch) const;  // [B]

  std::size_t state_dim() const { return state_dim_; }
  const NetworkOptions& options() const { return options_; }
  const Tensor& value0() const { return value0_; }
  nn::NamedParameters named_parameters() const;

 private:
  std::size_t state_dim_;
  NetworkOptions options_;
  std::vector<nn::LstmCell> cells_;
  nn::Linear gradient_head_;
  std::optional<nn::Linear> hessian_head_;
  Tensor value0_;     // [1]
  Tensor gradient0_;  // [n], used when trainable_initial_gradient
  Tensor shift_;
  Tensor scale_;
};

struct RolloutBatch {
  std::vector<Tensor> states;           // K+1 x [B, n]
  std::vector<Tensor> controls;         // K x [B, m]
  std::vector<Tensor> values;           // K+1 x [B]
  std::vector<Tensor> value_gradients;  // K+1 x [B, n]
  std::vector<Tensor> hessian_columns;  // K+1 x [B, n], empty without a Hessian head
  std::vector<Tensor> noise;            // K x [B, v]
  std::vector<Tensor> value_increments; // K x [B], V_{k+1} - V_k

  std::size_t batch() const { return states.front().shape()[0]; }
  std::size_t steps() const { return controls.size(); }
  // Detached copies stacked along time.
  Tensor stacked_states() const;    // [B, K+1, n]
  Tensor stacked_controls() const;  // [B, K, m]
  Tensor stacked_values() const;    // [B, K+1]
};

// Brownian increments N(0, dt), K tensors [B, v]. Row b of step k is drawn
// from rng.split(k).split(b) so chunked generation is order-free.
std::vector<Tensor> sample_noise(const SocProblem& problem, std::size_t batch,
                                 const RandomStream& rng, std::size_t row_offset = 0);

// Replaces the inner minimizer (e.g. with a closed form); receives
// (step, x_k, V_x,k, hessian column, previous control) and returns u [B, m].
using ControlSolver = std::function<Tensor(std::size_t, const Tensor&, const Tensor&,
                                           const Tensor&, const Tensor&)>;

struct RolloutOptions {
  search::NovasConfig novas;
  double sigma0 = 10.0;
  ControlSolver solver;  // empty: NOVAS on the Hamiltonian
};

// Forward shooting of the discretized FSDE/BSDE pair. Step k minimizes the
// Hamiltonian with search stream search_rng.split(k), warm-started from the
// previous control.
RolloutBatch fbsde_rollout(const SocProblem& problem, const FbsdeNetwork& net,
                           const RolloutOptions& options, const std::vector<Tensor>& noise,
                           const RandomStream& search_rng);
RolloutBatch fbsde_rollout(const SocProblem& problem, const FbsdeNetwork& net,
                           const RolloutOptions& options, const RandomStream& rng,
                           std::size_t batch);

struct LossWeights {
  std::array<double, 6> weights{1, 1, 0, 1, 1, 0};
  double delta = 50.0;

  static LossWeights from(const std::vector<double>& weights, double delta);
};

struct LossTerms {
  Tensor total;
  std::array<double, 6> parts{};  // unweighted batch means of the six terms
};

// l1 H(V_K - phi) + l2 H(V_x,K - phi_x) + l3 H(hess_K - phi_xx col)
//   + l4 phi^2 + l5 |phi_x|^2 + l6 |phi_xx col|^2, each batch-averaged; vector
// terms sum over components first.
LossTerms fbsde_loss(const RolloutBatch& rollout, const SocProblem& problem,
                     const LossWeights& weights);

struct TrainOptions {
  std::size_t iterations = 3500;
  std::size_t batch = 128;
  nn::LearningRateSchedule schedule{.initial = 5e-3};
  search::NovasConfig train_novas;
  search::NovasConfig eval_novas;
  double sigma0 = 10.0;
  LossWeights loss;
  std::size_t validate_every = 100;  // 0 disables validation
  std::size_t validation_batch = 128;
  std::uint64_t seed = 0;
};

struct TrainRecord {
  std::size_t iteration = 0;
  double loss = 0.0;
  double terminal_cost = 0.0;  // batch mean of phi(x_K)
  double initial_value = 0.0;
  double validation = std::numeric_limits<double>::quiet_NaN();
};

// Adam over the LSTM, heads and V_0. Iteration t trains on noise from
// seed-domain 0 split t; validation reuses one fixed draw from domain 1.
// Test draws (domain 2) never appear here.
class FbsdeTrainer {
 public:
  FbsdeTrainer(const SocProblem& problem, FbsdeNetwork& net, TrainOptions options);

  TrainRecord step();
  // Loss on the next training batch without updating anything.
  TrainRecord initial_record() const;
  // Mean terminal cost on the validation draw with inference settings.
  double validate() const;
  bool done() const { return iteration_ >= options_.iterations; }

  std::size_t iteration() const { return iteration_; }
  nn::Adam& optimizer() { return optimizer_; }
  void restore(std::size_t iteration) { iteration_ = iteration; }

  std::optional<double> best_validation() const { return best_validation_; }
  // Parameter values at the best validation so far (empty if none).
  const std::vector<std::vector<double>>& best_parameters() const { return best_parameters_; }
  void restore_best(double validation, std::vector<std::vector<double>> parameters) {
    best_validation_ = validation;
    best_parameters_ = std::move(parameters);
  }
  void load_best();

 private:
  const SocProblem& problem_;
  FbsdeNetwork& net_;
  TrainOptions options_;
  nn::Adam optimizer_;
  std::size_t iteration_ = 0;
  std::optional<double> best_validation_;
  std::vector<std::vector<double>> best_parameters_;
};

// The first record (iteration 0) holds the untrained loss and validation.
std::vector<TrainRecord> train_fbsde(const SocProblem& problem, FbsdeNetwork& net,
                                     const TrainOptions& options,
                                     const std::function<void(const TrainRecord&)>& on_record = {});

// Open-loop or feedback policy for baselines: (step, x_k [B, n], stream) -> u [B, m].
using ControlPolicy = std::function<Tensor(std::size_t, const Tensor&, const RandomStream&)>;

struct EvaluationOptions {
  std::size_t rollouts = 128;
  std::size_t chunk = 32;  // rollouts per work unit; fixes the noise layout
  std::size_t jobs = 1;
  search::NovasConfig novas;
  double sigma0 = 10.0;
  std::uint64_t seed = 0;  // test noise comes from domain 2 of this seed
};

struct Evaluation {
  std::size_t steps = 0;
  std::size_t state_dim = 0;
  std::size_t control_dim = 0;
  std::vector<double> states;         // [R, K+1, n]
  std::vector<double> controls;       // [R, K, m]
  std::vector<double> terminal_cost;  // [R], phi(x_K)
  std::vector<double> running_cost;   // [R], sum_k l(x_k, u_k) dt

  std::size_t rollouts() const { return terminal_cost.size(); }
  double state(std::size_t r, std::size_t k, std::size_t i) const {
    return states[(r * (steps + 1) + k) * state_dim + i];
  }
  // Across-rollout statistics of one state coordinate at step k.
  struct Moments {
    double mean, stddev, min, max;
  };
  Moments state_moments(std::size_t k, std::size_t i) const;
  Moments terminal_moments() const;
};

// Rollouts of the trained network with inference-grade NOVAS, in fixed chunks
// spread over `jobs` threads. Results do not depend on `jobs`.
Evaluation evaluate_policy(const SocProblem& problem, const FbsdeNetwork& net,
                           const EvaluationOptions& options);
// Same noise layout as evaluate_policy, so strategies see common test noise.
Evaluation evaluate_baseline(const SocProblem& problem, const ControlPolicy& policy,
                             const EvaluationOptions& options);

}  // namespace novas::fbsde
