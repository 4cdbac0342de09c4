#pragma once

#include <functional>
#include <string>

#include "novas/nn/adam.hpp"
#include "novas/nn/layers.hpp"
#include "novas/search/novas.hpp"

namespace novas::spen {

// Scalar energy E(x, y) from an MLP over the concatenated pair.
class EnergyNet {
 public:
  EnergyNet(std::size_t width, std::size_t hidden_layers, RandomStream& rng);
  explicit EnergyNet(nn::Mlp mlp);

  // x [B], y [B, M, 1] -> [B, M]
  Tensor energy(const Tensor& x, const Tensor& y) const;
  // dE/dy at x [B], y [B, 1] -> [B, 1], differentiable in the weights.
  Tensor energy_gradient(const Tensor& x, const Tensor& y) const;

  EnergyNet clone() const { return EnergyNet(mlp_.clone()); }
  const nn::Mlp& mlp() const { return mlp_; }
  nn::NamedParameters named_parameters() const { return mlp_.named_parameters("energy"); }

 private:
  nn::Mlp mlp_;
};

// Noiseless y = x sin x on [0, 2 pi]. Targets are stored standardized with the
// training-set mean and stddev. The validation split has the test split's size.
struct RegressionDataset {
  std::vector<double> train_x, train_y;
  std::vector<double> valid_x, valid_y;
  std::vector<double> test_x, test_y;
  double target_mean = 0.0;
  double target_scale = 1.0;

  static RegressionDataset generate(std::size_t n_train, std::size_t n_test, std::uint64_t seed);
  static double ground_truth(double x);

  double standardize(double y) const { return (y - target_mean) / target_scale; }
  double restore(double y) const { return y * target_scale + target_mean; }
  // Shuffled index batches for one epoch; the order depends only on (seed, epoch).
  std::vector<std::vector<std::size_t>> batches(std::size_t batch_size, std::uint64_t seed,
                                                std::size_t epoch) const;
};

enum class InnerKind { Novas, Cem, GradientDescent };
InnerKind parse_inner(const std::string& name);
std::string to_string(InnerKind kind);

struct InnerOptions {
  InnerKind kind = InnerKind::Novas;
  search::NovasConfig novas;  // also supplies samples and iterations for CEM
  std::size_t cem_elites = 10;
  double mean0 = 0.0;
  double sigma0 = 1.0;
  std::size_t gd_steps = 10;
  double gd_lr = 0.1;
};

// Any energy with the EnergyNet calling conventions; `gradient` is only needed
// by the gradient-descent inner loop.
struct EnergyModel {
  std::function<Tensor(const Tensor& x, const Tensor& y)> energy;    // [B], [B, M, 1] -> [B, M]
  std::function<Tensor(const Tensor& x, const Tensor& y)> gradient;  // [B], [B, 1] -> [B, 1]

  static EnergyModel of(const EnergyNet& net);
};

// y_hat = argmin_y E(x, y) per row of x [B], returned as [B, 1] in
// standardized units. CEM runs its iterations off the tape and finishes with
// one on-graph search step from the CEM state so that training still sees a
// gradient.
Tensor spen_predict(const EnergyModel& model, const Tensor& x, const InnerOptions& inner,
                    const RandomStream& rng);
Tensor spen_predict(const EnergyNet& net, const Tensor& x, const InnerOptions& inner,
                    const RandomStream& rng);

struct SpenTrainOptions {
  std::size_t epochs = 60;
  std::size_t batch = 64;
  double lr = 0.02;
  InnerOptions inner;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean over the epoch's batches (epoch 0: full pass, no update)
  double test_loss = 0.0;
};

// Mean squared error on standardized targets over the test split.
double spen_test_loss(const EnergyNet& net, const RegressionDataset& data, const InnerOptions& inner,
                      const RandomStream& rng);
double spen_validation_loss(const EnergyNet& net, const RegressionDataset& data,
                            const InnerOptions& inner, const RandomStream& rng);

// Adam on MSE(y_hat, y*), one epoch per step(). Epoch e shuffles and searches
// with streams derived from (seed, e) only, so a restored trainer continues
// exactly where a saved one stopped.
class SpenTrainer {
 public:
  SpenTrainer(EnergyNet& net, const RegressionDataset& data, SpenTrainOptions options);

  // Untrained losses, recorded as epoch 0.
  EpochRecord initial_record() const;
  EpochRecord step();
  bool done() const { return epoch_ >= options_.epochs; }

  std::size_t epoch() const { return epoch_; }
  nn::Adam& optimizer() { return optimizer_; }
  void restore(std::size_t epoch) { epoch_ = epoch; }

 private:
  EnergyNet& net_;
  const RegressionDataset& data_;
  SpenTrainOptions options_;
  nn::Adam optimizer_;
  std::size_t epoch_ = 0;
};

// Epoch 0 records the untrained losses.
std::vector<EpochRecord> train_spen(EnergyNet& net, const RegressionDataset& data,
                                    const SpenTrainOptions& options,
                                    const std::function<void(const EpochRecord&)>& on_epoch = {});

// Test loss with the inner iteration count replaced by each entry of `counts`.
std::vector<double> eval_altered_inner(const EnergyNet& net, const RegressionDataset& data,
                                       const InnerOptions& inner,
                                       const std::vector<std::size_t>& counts, std::uint64_t seed);

// Trains one gradient-descent model per candidate inner step size from the
// same initial weights and keeps the one with the lowest validation loss.
struct GdTuning {
  double best_lr = 0.0;
  std::vector<double> validation;  // per candidate
  std::vector<EpochRecord> history;  // of the chosen model
};
GdTuning tune_gd_lr(EnergyNet& net, const RegressionDataset& data, const SpenTrainOptions& options,
                    const std::vector<double>& candidates);

struct Landscape {
  std::vector<double> x_grid;
  std::vector<double> y_grid;  // original target units
  std::vector<double> log_energy;  // [x, y] row-major, log(1 + E - min_y E) per x
  std::vector<double> argmin;      // per x, in original units
};

Landscape energy_landscape_grid(const EnergyModel& model, const RegressionDataset& data,
                                const std::vector<double>& x_grid, const std::vector<double>& y_grid);
Landscape energy_landscape_grid(const EnergyNet& net, const RegressionDataset& data,
                                const std::vector<double>& x_grid, const std::vector<double>& y_grid);

std::vector<double> linspace(double lo, double hi, std::size_t count);

}  // namespace novas::spen
