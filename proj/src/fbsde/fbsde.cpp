#include "novas/fbsde/fbsde.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace novas::fbsde {

namespace {

enum Domain : std::uint64_t {
  TrainNoise = 0,
  ValidationNoise = 1,
  TestNoise = 2,
  TrainSearch = 3,
  ValidationSearch = 4,
  TestSearch = 5,
  BaselineDraws = 6,
};

Tensor optional_vector(const std::vector<double>& v, std::size_t n, double fill, const char* what) {
  if (v.empty()) return Tensor::full({n}, fill);
  if (v.size() != n) {
    throw std::invalid_argument(std::string("network ") + what + " needs " + std::to_string(n) +
                                " entries, got " + std::to_string(v.size()));
  }
  return Tensor::vector(v);
}

Tensor stack_time(const std::vector<Tensor>& parts) {
  std::vector<Tensor> rows;
  rows.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin() + 1, 1);
    rows.push_back(reshape(p.detach(), s));
  }
  return no_grad([&] { return concat(rows, 1); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Network

FbsdeNetwork::FbsdeNetwork(std::size_t state_dim, NetworkOptions options, RandomStream& rng)
    : state_dim_(state_dim),
      options_(std::move(options)),
      gradient_head_(options_.hidden, state_dim, rng) {
  if (state_dim == 0 || options_.hidden == 0 || options_.layers == 0) {
    throw std::invalid_argument("FbsdeNetwork: zero-sized network");
  }
  for (std::size_t l = 0; l < options_.layers; ++l) {
    cells_.emplace_back(l == 0 ? state_dim : options_.hidden, options_.hidden, rng);
  }
  if (options_.hessian_head) hessian_head_.emplace(options_.hidden, state_dim, rng);
  value0_ = Tensor::vector({options_.initial_value});
  value0_.set_requires_grad();
  gradient0_ = Tensor::zeros({state_dim});
  if (options_.trainable_initial_gradient) gradient0_.set_requires_grad();
  shift_ = optional_vector(options_.input_shift, state_dim, 0.0, "input shift");
  scale_ = optional_vector(options_.input_scale, state_dim, 1.0, "input scale");
}

FbsdeNetwork::State FbsdeNetwork::initial_state(std::size_t batch) const {
  State s;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    s.hidden.push_back(Tensor::zeros({batch, options_.hidden}));
    s.cell.push_back(Tensor::zeros({batch, options_.hidden}));
  }
  return s;
}

FbsdeNetwork::Output FbsdeNetwork::step(const Tensor& x, State& state, bool first) const {
  if (x.dim() != 2 || x.shape()[1] != state_dim_) {
    throw ShapeError("FbsdeNetwork expects [batch, " + std::to_string(state_dim_) + "], got " +
                     shape_string(x.shape()));
  }
  Tensor h = (x - shift_) * scale_;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    std::tie(state.hidden[l], state.cell[l]) = cells_[l].forward(h, state.hidden[l], state.cell[l]);
    h = state.hidden[l];
  }
  Output out;
  out.value_gradient = first && options_.trainable_initial_gradient
                           ? broadcast_to(reshape(gradient0_, {1, state_dim_}), x.shape())
                           : gradient_head_.forward(h);
  if (hessian_head_) out.hessian_column = hessian_head_->forward(h);
  return out;
}

Tensor FbsdeNetwork::initial_value(std::size_t batch) const { return broadcast_to(value0_, {batch}); }

nn::NamedParameters FbsdeNetwork::named_parameters() const {
  nn::NamedParameters out;
  for (std::size_t l = 0; l < cells_.size(); ++l) cells_[l].append_parameters("lstm." + std::to_string(l), out);
  gradient_head_.append_parameters("gradient_head", out);
  if (hessian_head_) hessian_head_->append_parameters("hessian_head", out);
  out.emplace_back("value0", value0_);
  if (options_.trainable_initial_gradient) out.emplace_back("gradient0", gradient0_);
  return out;
}

// ---------------------------------------------------------------------------
// Rollout

Tensor RolloutBatch::stacked_states() const { return stack_time(states); }
Tensor RolloutBatch::stacked_controls() const { return stack_time(controls); }
Tensor RolloutBatch::stacked_values() const { return stack_time(values); }

std::vector<Tensor> sample_noise(const SocProblem& problem, std::size_t batch,
                                 const RandomStream& rng, std::size_t row_offset) {
  const std::size_t v = problem.noise_dim();
  const double scale = std::sqrt(problem.dt());
  std::vector<Tensor> out;
  out.reserve(problem.steps());
  for (std::size_t k = 0; k < problem.steps(); ++k) {
    const RandomStream step = rng.split(k);
    std::vector<double> dw(batch * v);
    for (std::size_t b = 0; b < batch; ++b) {
      RandomStream row = step.split(row_offset + b);
      for (std::size_t j = 0; j < v; ++j) dw[b * v + j] = scale * row.normal();
    }
    out.push_back(Tensor::from({batch, v}, std::move(dw)));
  }
  return out;
}

RolloutBatch fbsde_rollout(const SocProblem& problem, const FbsdeNetwork& net,
                           const RolloutOptions& options, const std::vector<Tensor>& noise,
                           const RandomStream& search_rng) {
  const std::size_t steps = problem.steps(), n = problem.state_dim(), m = problem.control_dim();
  if (noise.size() != steps || steps == 0) {
    throw std::invalid_argument("fbsde_rollout: expected " + std::to_string(steps) +
                                " noise tensors, got " + std::to_string(noise.size()));
  }
  if (net.state_dim() != n) throw ShapeError("fbsde_rollout: network and problem dimensions differ");
  const std::size_t batch = noise.front().shape()[0];
  const double dt = problem.dt();
  search::NovasConfig novas = options.novas;
  novas.maximize = false;

  RolloutBatch out;
  out.noise = noise;
  Tensor x = problem.initial_state(batch);
  Tensor value = net.initial_value(batch);
  auto state = net.initial_state(batch);
  Tensor previous = Tensor::zeros({batch, m});
  out.states.push_back(x);
  out.values.push_back(value);

  for (std::size_t k = 0; k < steps; ++k) {
    const auto head = net.step(x, state, k == 0);
    out.value_gradients.push_back(head.value_gradient);
    if (head.hessian_column.defined()) out.hessian_columns.push_back(head.hessian_column);

    Tensor u;
    if (options.solver) {
      u = options.solver(k, x, head.value_gradient, head.hessian_column, previous);
    } else {
      const auto objective = [&](const Tensor& candidates) {
        return problem.hamiltonian(x, candidates, head.value_gradient, head.hessian_column);
      };
      const search::GaussianSearchState init{previous.detach(), Tensor::full({batch, m}, options.sigma0)};
      u = search::novas_optimize(objective, init, novas, search_rng.split(k));
    }

    const Tensor shock = problem.diffuse(x, u, noise[k]);
    const Tensor increment = sum(head.value_gradient * shock, 1) - problem.running_cost(x, u) * dt;
    Tensor next = x + problem.drift(x, u) * dt + shock;
    problem.check_state(next, k + 1);
    value = value + increment;

    out.controls.push_back(u);
    out.value_increments.push_back(increment);
    out.states.push_back(next);
    out.values.push_back(value);
    previous = u;
    x = std::move(next);
  }
  const auto last = net.step(x, state, false);
  out.value_gradients.push_back(last.value_gradient);
  if (last.hessian_column.defined()) out.hessian_columns.push_back(last.hessian_column);
  return out;
}

RolloutBatch fbsde_rollout(const SocProblem& problem, const FbsdeNetwork& net,
                           const RolloutOptions& options, const RandomStream& rng,
                           std::size_t batch) {
  return fbsde_rollout(problem, net, options, sample_noise(problem, batch, rng.split(0)), rng.split(1));
}

// ---------------------------------------------------------------------------
// Loss

LossWeights LossWeights::from(const std::vector<double>& weights, double delta) {
  if (weights.size() != 6) {
    throw std::invalid_argument("loss weights need 6 entries, got " + std::to_string(weights.size()));
  }
  if (!(delta > 0)) throw std::invalid_argument("loss delta must be positive");
  LossWeights w;
  std::copy(weights.begin(), weights.end(), w.weights.begin());
  w.delta = delta;
  return w;
}

LossTerms fbsde_loss(const RolloutBatch& rollout, const SocProblem& problem,
                     const LossWeights& weights) {
  const auto target = problem.terminal(rollout.states.back());
  const double delta = weights.delta;
  std::array<Tensor, 6> terms;
  terms[0] = mean_all(nn::huber(rollout.values.back() - target.value, delta));
  terms[1] = mean_all(sum(nn::huber(rollout.value_gradients.back() - target.gradient, delta), 1));
  if (!rollout.hessian_columns.empty()) {
    terms[2] = mean_all(sum(nn::huber(rollout.hessian_columns.back() - target.hessian_column, delta), 1));
  } else if (weights.weights[2] != 0.0) {
    throw std::invalid_argument("loss weight l3 is nonzero but the network has no Hessian head");
  }
  terms[3] = mean_all(square(target.value));
  terms[4] = mean_all(sum(square(target.gradient), 1));
  terms[5] = mean_all(sum(square(target.hessian_column), 1));

  LossTerms out;
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < 6; ++i) {
    if (!terms[i].defined()) continue;
    out.parts[i] = terms[i].item();
    if (weights.weights[i] != 0.0) total = total + terms[i] * weights.weights[i];
  }
  out.total = reshape(total, {});
  return out;
}

// ---------------------------------------------------------------------------
// Training

FbsdeTrainer::FbsdeTrainer(const SocProblem& problem, FbsdeNetwork& net, TrainOptions options)
    : problem_(problem),
      net_(net),
      options_(std::move(options)),
      optimizer_(net.named_parameters(), {.schedule = options_.schedule}) {
  if (options_.batch == 0) throw std::invalid_argument("fbsde training: batch must be positive");
  options_.train_novas.validate();
  options_.eval_novas.validate();
}

TrainRecord FbsdeTrainer::initial_record() const {
  NoGradGuard guard;
  const RandomStream root(options_.seed);
  const auto noise = sample_noise(problem_, options_.batch, root.split(TrainNoise).split(iteration_));
  const auto rollout = fbsde_rollout(problem_, net_, {options_.train_novas, options_.sigma0, {}}, noise,
                                     root.split(TrainSearch).split(iteration_));
  TrainRecord record;
  record.iteration = iteration_;
  record.loss = fbsde_loss(rollout, problem_, options_.loss).total.item();
  record.terminal_cost = mean_all(problem_.terminal(rollout.states.back()).value).item();
  record.initial_value = net_.value0().item();
  if (options_.validate_every > 0) record.validation = validate();
  return record;
}

TrainRecord FbsdeTrainer::step() {
  const RandomStream root(options_.seed);
  Tape::current().clear();
  const auto noise = sample_noise(problem_, options_.batch, root.split(TrainNoise).split(iteration_));
  const auto rollout = fbsde_rollout(problem_, net_, {options_.train_novas, options_.sigma0, {}}, noise,
                                     root.split(TrainSearch).split(iteration_));
  const auto loss = fbsde_loss(rollout, problem_, options_.loss);
  const double phi = no_grad([&] { return mean_all(problem_.terminal(rollout.states.back()).value).item(); });

  optimizer_.zero_grad();
  loss.total.backward();
  Tape::current().clear();
  optimizer_.step();
  ++iteration_;

  TrainRecord record;
  record.iteration = iteration_;
  record.loss = loss.total.item();
  record.terminal_cost = phi;
  record.initial_value = net_.value0().item();
  if (options_.validate_every > 0 && iteration_ % options_.validate_every == 0) {
    record.validation = validate();
    if (!best_validation_ || record.validation < *best_validation_) {
      best_validation_ = record.validation;
      best_parameters_.clear();
      for (const auto& [name, p] : net_.named_parameters()) best_parameters_.push_back(p.to_vector());
    }
  }
  return record;
}

double FbsdeTrainer::validate() const {
  NoGradGuard guard;
  const RandomStream root(options_.seed);
  const auto noise = sample_noise(problem_, options_.validation_batch, root.split(ValidationNoise));
  const auto rollout = fbsde_rollout(problem_, net_, {options_.eval_novas, options_.sigma0, {}}, noise,
                                     root.split(ValidationSearch));
  return mean_all(problem_.terminal(rollout.states.back()).value).item();
}

void FbsdeTrainer::load_best() {
  if (best_parameters_.empty()) return;
  auto params = net_.named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].second.mutable_data();
    std::copy(best_parameters_[i].begin(), best_parameters_[i].end(), data.begin());
  }
}

std::vector<TrainRecord> train_fbsde(const SocProblem& problem, FbsdeNetwork& net,
                                     const TrainOptions& options,
                                     const std::function<void(const TrainRecord&)>& on_record) {
  FbsdeTrainer trainer(problem, net, options);
  std::vector<TrainRecord> history{trainer.initial_record()};
  if (on_record) on_record(history.back());
  while (!trainer.done()) {
    history.push_back(trainer.step());
    if (on_record) on_record(history.back());
  }
  trainer.load_best();
  return history;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct Chunk {
  std::size_t index, first, rows;
};

// Runs fn over fixed chunks of the rollout range on `jobs` worker threads.
void for_each_chunk(std::size_t total, std::size_t chunk, std::size_t jobs,
                    const std::function<void(const Chunk&)>& fn) {
  if (chunk == 0) throw std::invalid_argument("evaluation chunk must be positive");
  std::vector<Chunk> chunks;
  for (std::size_t first = 0, c = 0; first < total; first += chunk, ++c) {
    chunks.push_back({c, first, std::min(chunk, total - first)});
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto worker = [&] {
    NoGradGuard guard;
    for (std::size_t i; (i = next.fetch_add(1)) < chunks.size();) {
      try {
        fn(chunks[i]);
      } catch (...) {
        std::lock_guard lock(failure_lock);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, chunks.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

Evaluation make_evaluation(const SocProblem& problem, std::size_t rollouts) {
  Evaluation e;
  e.steps = problem.steps();
  e.state_dim = problem.state_dim();
  e.control_dim = problem.control_dim();
  e.states.resize(rollouts * (e.steps + 1) * e.state_dim);
  e.controls.resize(rollouts * e.steps * e.control_dim);
  e.terminal_cost.resize(rollouts);
  e.running_cost.resize(rollouts);
  return e;
}

void store(Evaluation& e, const SocProblem& problem, const Chunk& chunk,
           const std::vector<Tensor>& states, const std::vector<Tensor>& controls) {
  const std::size_t n = e.state_dim, m = e.control_dim, steps = e.steps;
  const auto phi = problem.terminal(states.back()).value;
  for (std::size_t b = 0; b < chunk.rows; ++b) {
    const std::size_t r = chunk.first + b;
    for (std::size_t k = 0; k <= steps; ++k) {
      for (std::size_t i = 0; i < n; ++i) e.states[(r * (steps + 1) + k) * n + i] = states[k].data()[b * n + i];
    }
    for (std::size_t k = 0; k < steps; ++k) {
      for (std::size_t j = 0; j < m; ++j) e.controls[(r * steps + k) * m + j] = controls[k].data()[b * m + j];
    }
    e.terminal_cost[r] = phi.data()[b];
  }
  for (std::size_t k = 0; k < steps; ++k) {
    const auto l = problem.running_cost(states[k], controls[k]);
    for (std::size_t b = 0; b < chunk.rows; ++b) e.running_cost[chunk.first + b] += l.data()[b] * problem.dt();
  }
}

Evaluation::Moments moments(const std::vector<double>& v) {
  Evaluation::Moments out{0.0, 0.0, v.empty() ? 0.0 : v.front(), v.empty() ? 0.0 : v.front()};
  for (double x : v) {
    out.mean += x;
    out.min = std::min(out.min, x);
    out.max = std::max(out.max, x);
  }
  out.mean /= static_cast<double>(std::max<std::size_t>(1, v.size()));
  for (double x : v) out.stddev += (x - out.mean) * (x - out.mean);
  out.stddev = std::sqrt(out.stddev / static_cast<double>(std::max<std::size_t>(1, v.size())));
  return out;
}

}  // namespace

Evaluation::Moments Evaluation::state_moments(std::size_t k, std::size_t i) const {
  std::vector<double> column;
  for (std::size_t r = 0; r < rollouts(); ++r) column.push_back(state(r, k, i));
  return moments(column);
}

Evaluation::Moments Evaluation::terminal_moments() const { return moments(terminal_cost); }

Evaluation evaluate_policy(const SocProblem& problem, const FbsdeNetwork& net,
                           const EvaluationOptions& options) {
  Evaluation e = make_evaluation(problem, options.rollouts);
  const RandomStream root(options.seed);
  for_each_chunk(options.rollouts, options.chunk, options.jobs, [&](const Chunk& chunk) {
    const auto noise = sample_noise(problem, chunk.rows, root.split(TestNoise), chunk.first);
    const auto rollout = fbsde_rollout(problem, net, {options.novas, options.sigma0, {}}, noise,
                                       root.split(TestSearch).split(chunk.index));
    store(e, problem, chunk, rollout.states, rollout.controls);
  });
  return e;
}

Evaluation evaluate_baseline(const SocProblem& problem, const ControlPolicy& policy,
                             const EvaluationOptions& options) {
  Evaluation e = make_evaluation(problem, options.rollouts);
  const RandomStream root(options.seed);
  const double dt = problem.dt();
  for_each_chunk(options.rollouts, options.chunk, options.jobs, [&](const Chunk& chunk) {
    const auto noise = sample_noise(problem, chunk.rows, root.split(TestNoise), chunk.first);
    const RandomStream draws = root.split(BaselineDraws).split(chunk.index);
    std::vector<Tensor> states{problem.initial_state(chunk.rows)}, controls;
    for (std::size_t k = 0; k < problem.steps(); ++k) {
      const Tensor& x = states.back();
      Tensor u = policy(k, x, draws.split(k));
      Tensor next = x + problem.drift(x, u) * dt + problem.diffuse(x, u, noise[k]);
      problem.check_state(next, k + 1);
      controls.push_back(std::move(u));
      states.push_back(std::move(next));
    }
    store(e, problem, chunk, states, controls);
  });
  return e;
}

}  // namespace novas::fbsde
