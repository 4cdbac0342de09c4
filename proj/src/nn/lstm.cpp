#include "novas/nn/lstm.hpp"

#include <cmath>
#include <tuple>

namespace novas::nn {

LstmCell::LstmCell(std::size_t input_size, std::size_t hidden_size, RandomStream& rng) {
  if (input_size == 0 || hidden_size == 0) throw std::invalid_argument("LstmCell: zero size");
  const double bound = std::sqrt(1.0 / static_cast<double>(hidden_size));
  w_input_ = rng.uniform_tensor({4 * hidden_size, input_size}, -bound, bound);
  w_hidden_ = rng.uniform_tensor({4 * hidden_size, hidden_size}, -bound, bound);
  bias_ = rng.uniform_tensor({4 * hidden_size}, -bound, bound);
  auto b = bias_.mutable_data();
  for (std::size_t i = hidden_size; i < 2 * hidden_size; ++i) b[i] += 1.0;  // forget gate
  w_input_.set_requires_grad();
  w_hidden_.set_requires_grad();
  bias_.set_requires_grad();
}

LstmCell::LstmCell(Tensor w_input, Tensor w_hidden, Tensor bias)
    : w_input_(std::move(w_input)), w_hidden_(std::move(w_hidden)), bias_(std::move(bias)) {
  const std::size_t h = w_hidden_.dim() == 2 ? w_hidden_.shape()[1] : 0;
  if (h == 0 || w_hidden_.shape()[0] != 4 * h || w_input_.dim() != 2 || w_input_.shape()[0] != 4 * h ||
      bias_.shape() != Shape{4 * h}) {
    throw ShapeError("LstmCell: weights " + shape_string(w_input_.shape()) + ", " + shape_string(w_hidden_.shape()) +
                     " and bias " + shape_string(bias_.shape()) + " do not form a cell");
  }
}

void LstmCell::reset(std::size_t batch) {
  hidden_ = Tensor::zeros({batch, hidden_size()});
  cell_ = Tensor::zeros({batch, hidden_size()});
}

Tensor LstmCell::step(const Tensor& x) {
  if (!hidden_.defined()) throw std::logic_error("LstmCell::step before reset()");
  std::tie(hidden_, cell_) = forward(x, hidden_, cell_);
  return hidden_;
}

std::pair<Tensor, Tensor> LstmCell::forward(const Tensor& x, const Tensor& hidden,
                                            const Tensor& cell) const {
  const std::size_t h = hidden_size();
  if (x.dim() != 2 || x.shape()[1] != input_size() || hidden.shape() != Shape{x.shape()[0], h} ||
      cell.shape() != hidden.shape()) {
    throw ShapeError("LstmCell expects [" + std::to_string(hidden.shape()[0]) + ", " +
                     std::to_string(input_size()) + "], got " + shape_string(x.shape()));
  }
  const Tensor gates =
      matmul(x, transpose(w_input_)) + matmul(hidden, transpose(w_hidden_)) + bias_;
  const Tensor in = sigmoid(slice(gates, 1, 0, h));
  const Tensor forget = sigmoid(slice(gates, 1, h, 2 * h));
  const Tensor candidate = tanh(slice(gates, 1, 2 * h, 3 * h));
  const Tensor out = sigmoid(slice(gates, 1, 3 * h, 4 * h));
  Tensor next_cell = forget * cell + in * candidate;
  Tensor next_hidden = out * tanh(next_cell);
  return {std::move(next_hidden), std::move(next_cell)};
}

void LstmCell::append_parameters(const std::string& prefix, NamedParameters& out) const {
  out.emplace_back(prefix + ".w_input", w_input_);
  out.emplace_back(prefix + ".w_hidden", w_hidden_);
  out.emplace_back(prefix + ".bias", bias_);
}

}  // namespace novas::nn
