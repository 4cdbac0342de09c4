#include "novas/spen/spen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>

namespace novas::spen {

namespace {

// Inputs on [0, 2 pi] are mapped to [-1, 1] before entering the network.
Tensor scale_input(const Tensor& x) { return x * (1.0 / std::numbers::pi) - 1.0; }

}  // namespace

EnergyNet::EnergyNet(std::size_t width, std::size_t hidden_layers, RandomStream& rng)
    : mlp_([&] {
        std::vector<std::size_t> sizes{2};
        std::vector<nn::Activation> acts;
        for (std::size_t i = 0; i < hidden_layers; ++i) {
          sizes.push_back(width);
          acts.push_back(nn::Activation::Softplus);
        }
        sizes.push_back(1);
        acts.push_back(nn::Activation::Identity);
        return nn::Mlp(sizes, acts, rng);
      }()) {}

EnergyNet::EnergyNet(nn::Mlp mlp) : mlp_(std::move(mlp)) {
  if (mlp_.layers().front().in_features() != 2 || mlp_.layers().back().out_features() != 1) {
    throw ShapeError("EnergyNet needs a 2-input, 1-output network");
  }
}

Tensor EnergyNet::energy(const Tensor& x, const Tensor& y) const {
  if (x.dim() != 1 || y.dim() != 3 || y.shape()[0] != x.shape()[0] || y.shape()[2] != 1) {
    throw ShapeError("EnergyNet: x " + shape_string(x.shape()) + " and y " + shape_string(y.shape()) +
                     " must be [B] and [B, M, 1]");
  }
  const std::size_t batch = y.shape()[0], samples = y.shape()[1];
  const Tensor context = broadcast_to(reshape(scale_input(x), {batch, 1, 1}), {batch, samples, 1});
  const Tensor input = reshape(concat({context, y}, 2), {batch * samples, 2});
  return reshape(mlp_.forward(input), {batch, samples});
}

Tensor EnergyNet::energy_gradient(const Tensor& x, const Tensor& y) const {
  const std::size_t batch = x.shape()[0];
  const Tensor input = concat({reshape(scale_input(x), {batch, 1}), y}, 1);
  return slice(mlp_.input_gradient(input), 1, 1, 2);
}

// ---------------------------------------------------------------------------

double RegressionDataset::ground_truth(double x) { return x * std::sin(x); }

RegressionDataset RegressionDataset::generate(std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  if (n_train < 2) throw std::invalid_argument("dataset: need at least two training points");
  RegressionDataset d;
  const RandomStream root(seed);
  RandomStream train = root.split(0), test = root.split(1), valid = root.split(3);
  const double hi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n_train; ++i) d.train_x.push_back(train.uniform(0.0, hi));
  for (std::size_t i = 0; i < n_test; ++i) d.test_x.push_back(test.uniform(0.0, hi));
  for (std::size_t i = 0; i < n_test; ++i) d.valid_x.push_back(valid.uniform(0.0, hi));
  std::vector<double> raw;
  for (double x : d.train_x) raw.push_back(ground_truth(x));
  d.target_mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
  double var = 0.0;
  for (double y : raw) var += (y - d.target_mean) * (y - d.target_mean);
  d.target_scale = std::sqrt(var / static_cast<double>(raw.size()));
  for (double y : raw) d.train_y.push_back(d.standardize(y));
  for (double x : d.test_x) d.test_y.push_back(d.standardize(ground_truth(x)));
  for (double x : d.valid_x) d.valid_y.push_back(d.standardize(ground_truth(x)));
  return d;
}

std::vector<std::vector<std::size_t>> RegressionDataset::batches(std::size_t batch_size, std::uint64_t seed,
                                                                 std::size_t epoch) const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream rng = RandomStream(seed).split(2).split(epoch);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  return out;
}

// ---------------------------------------------------------------------------

InnerKind parse_inner(const std::string& name) {
  if (name == "novas") return InnerKind::Novas;
  if (name == "cem") return InnerKind::Cem;
  if (name == "gd") return InnerKind::GradientDescent;
  throw std::invalid_argument("unknown inner optimizer '" + name + "' (expected novas|cem|gd)");
}

std::string to_string(InnerKind kind) {
  switch (kind) {
    case InnerKind::Novas: return "novas";
    case InnerKind::Cem: return "cem";
    case InnerKind::GradientDescent: return "gd";
  }
  return "?";
}

EnergyModel EnergyModel::of(const EnergyNet& net) {
  return {[&net](const Tensor& x, const Tensor& y) { return net.energy(x, y); },
          [&net](const Tensor& x, const Tensor& y) { return net.energy_gradient(x, y); }};
}

Tensor spen_predict(const EnergyNet& net, const Tensor& x, const InnerOptions& inner,
                    const RandomStream& rng) {
  return spen_predict(EnergyModel::of(net), x, inner, rng);
}

Tensor spen_predict(const EnergyModel& model, const Tensor& x, const InnerOptions& inner,
                    const RandomStream& rng) {
  const std::size_t batch = x.shape()[0];
  const auto objective = [&](const Tensor& y) { return model.energy(x, y); };
  const auto init = search::GaussianSearchState::constant(batch, 1, inner.mean0, inner.sigma0);
  search::NovasConfig cfg = inner.novas;
  cfg.maximize = false;
  switch (inner.kind) {
    case InnerKind::Novas:
      return search::novas_optimize(objective, init, cfg, rng);
    case InnerKind::Cem: {
      search::GaussianSearchState state = init;
      if (cfg.iterations > 1) {
        const search::CemConfig cem{.samples = cfg.samples,
                                    .iterations = cfg.iterations - 1,
                                    .elites = inner.cem_elites,
                                    .epsilon = cfg.epsilon};
        state = search::cem_search(objective, init, cem, rng);
      }
      return search::novas_step(state, objective, cfg, rng.split(cfg.iterations - 1)).mean;
    }
    case InnerKind::GradientDescent:
      if (!model.gradient) throw std::invalid_argument("gradient-descent inner loop needs an energy gradient");
      return search::unrolled_gd([&](const Tensor& y) { return model.gradient(x, y); },
                                 Tensor::full({batch, 1}, inner.mean0), inner.gd_steps, inner.gd_lr);
  }
  throw std::logic_error("unhandled inner optimizer");
}

namespace {

Tensor gather(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return Tensor::vector(std::move(out));
}

double split_loss(const EnergyNet& net, const std::vector<double>& xs, const std::vector<double>& ys,
                  const InnerOptions& inner, const RandomStream& rng) {
  NoGradGuard guard;
  constexpr std::size_t chunk = 256;
  double total = 0.0;
  for (std::size_t start = 0, c = 0; start < xs.size(); start += chunk, ++c) {
    std::vector<std::size_t> idx(std::min(chunk, xs.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor pred = spen_predict(net, gather(xs, idx), inner, rng.split(c));
    const Tensor err = reshape(pred, {idx.size()}) - gather(ys, idx);
    total += sum_all(square(err)).item();
  }
  return total / static_cast<double>(std::max<std::size_t>(1, xs.size()));
}

}  // namespace

double spen_test_loss(const EnergyNet& net, const RegressionDataset& data, const InnerOptions& inner,
                      const RandomStream& rng) {
  return split_loss(net, data.test_x, data.test_y, inner, rng);
}

double spen_validation_loss(const EnergyNet& net, const RegressionDataset& data,
                            const InnerOptions& inner, const RandomStream& rng) {
  return split_loss(net, data.valid_x, data.valid_y, inner, rng);
}

SpenTrainer::SpenTrainer(EnergyNet& net, const RegressionDataset& data, SpenTrainOptions options)
    : net_(net),
      data_(data),
      options_(std::move(options)),
      optimizer_(net.named_parameters(), {.schedule = {.initial = options_.lr}}) {
  if (options_.batch == 0) throw std::invalid_argument("spen training: batch must be positive");
}

EpochRecord SpenTrainer::initial_record() const {
  const RandomStream root(options_.seed);
  return {0, split_loss(net_, data_.train_x, data_.train_y, options_.inner, root.split(2)),
          spen_test_loss(net_, data_, options_.inner, root.split(1))};
}

EpochRecord SpenTrainer::step() {
  const RandomStream root(options_.seed);
  const std::size_t epoch = ++epoch_;
  const auto batches = data_.batches(options_.batch, options_.seed, epoch);
  double total = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    Tape::current().clear();
    const Tensor x = gather(data_.train_x, batches[b]);
    const Tensor y = reshape(gather(data_.train_y, batches[b]), {batches[b].size(), 1});
    const Tensor pred = spen_predict(net_, x, options_.inner, root.split(0).split(epoch).split(b));
    const Tensor loss = nn::mse(pred, y);
    optimizer_.zero_grad();
    loss.backward();
    Tape::current().clear();
    optimizer_.step();
    total += loss.item();
  }
  return {epoch, total / static_cast<double>(batches.size()),
          spen_test_loss(net_, data_, options_.inner, root.split(1))};
}

std::vector<EpochRecord> train_spen(EnergyNet& net, const RegressionDataset& data,
                                    const SpenTrainOptions& options,
                                    const std::function<void(const EpochRecord&)>& on_epoch) {
  SpenTrainer trainer(net, data, options);
  std::vector<EpochRecord> history{trainer.initial_record()};
  if (on_epoch) on_epoch(history.back());
  while (!trainer.done()) {
    history.push_back(trainer.step());
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

std::vector<double> eval_altered_inner(const EnergyNet& net, const RegressionDataset& data,
                                       const InnerOptions& inner,
                                       const std::vector<std::size_t>& counts, std::uint64_t seed) {
  std::vector<double> out;
  for (std::size_t n : counts) {
    InnerOptions altered = inner;
    if (inner.kind == InnerKind::GradientDescent) {
      altered.gd_steps = n;
    } else {
      altered.novas.iterations = n;
    }
    out.push_back(spen_test_loss(net, data, altered, RandomStream(seed).split(1)));
  }
  return out;
}

GdTuning tune_gd_lr(EnergyNet& net, const RegressionDataset& data, const SpenTrainOptions& options,
                    const std::vector<double>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("tune_gd_lr: no candidate step sizes");
  const EnergyNet initial = net.clone();
  GdTuning out;
  std::optional<EnergyNet> best;
  for (double lr : candidates) {
    EnergyNet trial = initial.clone();
    SpenTrainOptions opts = options;
    opts.inner.kind = InnerKind::GradientDescent;
    opts.inner.gd_lr = lr;
    auto history = train_spen(trial, data, opts);
    const double v = spen_validation_loss(trial, data, opts.inner, RandomStream(options.seed).split(3));
    out.validation.push_back(v);
    if (!best || v < *std::min_element(out.validation.begin(), out.validation.end() - 1)) {
      best = std::move(trial);
      out.best_lr = lr;
      out.history = std::move(history);
    }
  }
  net = std::move(*best);
  return out;
}

Landscape energy_landscape_grid(const EnergyNet& net, const RegressionDataset& data,
                                const std::vector<double>& x_grid, const std::vector<double>& y_grid) {
  return energy_landscape_grid(EnergyModel::of(net), data, x_grid, y_grid);
}

Landscape energy_landscape_grid(const EnergyModel& model, const RegressionDataset& data,
                                const std::vector<double>& x_grid, const std::vector<double>& y_grid) {
  NoGradGuard guard;
  Landscape out{x_grid, y_grid, {}, {}};
  if (x_grid.empty() || y_grid.empty()) return out;
  const std::size_t nx = x_grid.size(), ny = y_grid.size();
  std::vector<double> ys;
  for (double y : y_grid) ys.push_back(data.standardize(y));
  const Tensor y = broadcast_to(Tensor::from({1, ny, 1}, ys), {nx, ny, 1});
  const auto energy = model.energy(Tensor::vector(x_grid), y).to_vector();
  out.log_energy.resize(nx * ny);
  for (std::size_t i = 0; i < nx; ++i) {
    const auto row = energy.begin() + static_cast<std::ptrdiff_t>(i * ny);
    const auto best = std::min_element(row, row + static_cast<std::ptrdiff_t>(ny));
    for (std::size_t j = 0; j < ny; ++j) out.log_energy[i * ny + j] = std::log1p(row[j] - *best);
    out.argmin.push_back(y_grid[static_cast<std::size_t>(best - row)]);
  }
  return out;
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return out;
}

}  // namespace novas::spen
