#pragma once

#include "novas/nn/layers.hpp"

namespace novas::nn {

// Single LSTM layer. Gate rows are stacked [input, forget, candidate, output]
// in both weight matrices.
class LstmCell {
 public:
  LstmCell(std::size_t input_size, std::size_t hidden_size, RandomStream& rng);
  // Wraps existing tensors: w_input [4h, in], w_hidden [4h, h], bias [4h].
  LstmCell(Tensor w_input, Tensor w_hidden, Tensor bias);

  // Zeroes hidden and cell state for a new rollout of `batch` rows.
  void reset(std::size_t batch);
  // Advances one step and returns the new hidden state [batch, hidden].
  Tensor step(const Tensor& x);
  // Pure step on caller-owned state; returns {hidden, cell}.
  std::pair<Tensor, Tensor> forward(const Tensor& x, const Tensor& hidden, const Tensor& cell) const;

  std::size_t input_size() const { return w_input_.shape()[1]; }
  std::size_t hidden_size() const { return w_hidden_.shape()[1]; }
  const Tensor& hidden() const { return hidden_; }
  const Tensor& cell() const { return cell_; }
  const Tensor& w_input() const { return w_input_; }
  const Tensor& w_hidden() const { return w_hidden_; }
  const Tensor& bias() const { return bias_; }

  void append_parameters(const std::string& prefix, NamedParameters& out) const;

 private:
  Tensor w_input_;   // [4h, in]
  Tensor w_hidden_;  // [4h, h]
  Tensor bias_;      // [4h]
  Tensor hidden_;
  Tensor cell_;
};

}  // namespace novas::nn
