#include "novas/nn/layers.hpp"

#include <cmath>

namespace novas::nn {

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "softplus") return Activation::Softplus;
  if (name == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Softplus: return softplus(x);
    case Activation::Relu: return maximum(x, 0.0);
  }
  throw std::logic_error("unhandled activation");
}

Tensor activation_derivative(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::Identity: return Tensor::ones(x.shape());
    case Activation::Tanh: {
      const Tensor t = tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Sigmoid: {
      const Tensor s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::Softplus: return sigmoid(x);
    case Activation::Relu: {
      // Piecewise constant; no gradient flows through the indicator.
      std::vector<double> v(x.numel());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.data()[i] > 0 ? 1.0 : 0.0;
      return Tensor::from(x.shape(), std::move(v));
    }
  }
  throw std::logic_error("unhandled activation");
}

Linear::Linear(std::size_t in_features, std::size_t out_features, RandomStream& rng) {
  if (in_features == 0 || out_features == 0) throw std::invalid_argument("Linear: zero-sized layer");
  const double bound = std::sqrt(1.0 / static_cast<double>(in_features));
  weight_ = rng.uniform_tensor({out_features, in_features}, -bound, bound);
  bias_ = rng.uniform_tensor({out_features}, -bound, bound);
  weight_.set_requires_grad();
  bias_.set_requires_grad();
}

Linear::Linear(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.dim() != 2 || bias_.dim() != 1 || bias_.shape()[0] != weight_.shape()[0]) {
    throw ShapeError("Linear: weight " + shape_string(weight_.shape()) + " and bias " +
                     shape_string(bias_.shape()) + " are inconsistent");
  }
}

Mlp Mlp::clone() const {
  std::vector<Linear> copies;
  for (const auto& l : layers_) copies.push_back(l.clone());
  return Mlp(std::move(copies), activations_);
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.dim() != 2 || x.shape()[1] != in_features()) {
    throw ShapeError("Linear expects [batch, " + std::to_string(in_features()) + "], got " +
                     shape_string(x.shape()));
  }
  return matmul(x, transpose(weight_)) + bias_;
}

void Linear::append_parameters(const std::string& prefix, NamedParameters& out) const {
  out.emplace_back(prefix + ".weight", weight_);
  out.emplace_back(prefix + ".bias", bias_);
}

Mlp::Mlp(const std::vector<std::size_t>& sizes, std::vector<Activation> activations,
         RandomStream& rng)
    : activations_(std::move(activations)) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) layers_.emplace_back(sizes[i], sizes[i + 1], rng);
  if (activations_.size() != layers_.size()) {
    throw std::invalid_argument("Mlp: " + std::to_string(activations_.size()) +
                                " activations for " + std::to_string(layers_.size()) + " layers");
  }
}

Mlp::Mlp(std::vector<Linear> layers, std::vector<Activation> activations)
    : layers_(std::move(layers)), activations_(std::move(activations)) {
  if (layers_.empty() || activations_.size() != layers_.size()) {
    throw std::invalid_argument("Mlp: layer/activation count mismatch");
  }
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (layers_[i].out_features() != layers_[i + 1].in_features()) {
      throw ShapeError("Mlp: layer " + std::to_string(i) + " emits " +
                       std::to_string(layers_[i].out_features()) + " features but layer " +
                       std::to_string(i + 1) + " expects " +
                       std::to_string(layers_[i + 1].in_features()));
    }
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = activate(layers_[i].forward(h), activations_[i]);
  return h;
}

Tensor Mlp::input_gradient(const Tensor& x) const {
  if (layers_.back().out_features() != 1) {
    throw ShapeError("input_gradient needs a scalar-output network");
  }
  std::vector<Tensor> pre;
  pre.reserve(layers_.size());
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    pre.push_back(layers_[i].forward(h));
    h = activate(pre.back(), activations_[i]);
  }
  // Reverse sweep: g holds d(out)/d(pre-activation of layer i).
  Tensor g = activation_derivative(pre.back(), activations_.back());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    Tensor dh = matmul(g, layers_[i].weight());
    if (i == 0) return dh;
    g = dh * activation_derivative(pre[i - 1], activations_[i - 1]);
  }
  throw std::logic_error("unreachable");
}

NamedParameters Mlp::named_parameters(const std::string& prefix) const {
  NamedParameters out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].append_parameters(prefix + ".layers." + std::to_string(i), out);
  }
  return out;
}

Tensor huber(const Tensor& a, double delta) {
  if (!(delta > 0)) throw std::invalid_argument("huber: delta must be positive");
  const auto& x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = std::abs(x[i]);
    out[i] = m < delta ? x[i] * x[i] : delta * (2.0 * m - delta);
  }
  auto pa = a.impl_ptr();
  return make_result("huber", a.shape(), std::move(out), {a}, [pa, delta](const TensorImpl& res) {
    auto& ga = pa->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double v = pa->data[i];
      const double d = std::abs(v) < delta ? 2.0 * v : 2.0 * delta * (v > 0 ? 1.0 : -1.0);
      ga[i] += res.grad[i] * d;
    }
  });
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("mse: prediction " + shape_string(prediction.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  return mean_all(square(prediction - target));
}

}  // namespace novas::nn
