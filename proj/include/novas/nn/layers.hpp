#pragma once

#include <string>
#include <utility>
#include <vector>

#include "novas/core/ops.hpp"
#include "novas/core/random.hpp"

namespace novas::nn {

using NamedParameters = std::vector<std::pair<std::string, Tensor>>;

enum class Activation { Identity, Tanh, Sigmoid, Softplus, Relu };

Activation parse_activation(const std::string& name);
Tensor activate(const Tensor& x, Activation act);
// Elementwise derivative of the activation at pre-activation x, on-graph.
Tensor activation_derivative(const Tensor& x, Activation act);

// y = x W^T + b. Weight is [out x in], bias [out].
class Linear {
 public:
  Linear(std::size_t in_features, std::size_t out_features, RandomStream& rng);
  Linear(Tensor weight, Tensor bias);

  Tensor forward(const Tensor& x) const;
  Linear clone() const { return Linear(weight_.clone(), bias_.clone()); }

  std::size_t in_features() const { return weight_.shape()[1]; }
  std::size_t out_features() const { return weight_.shape()[0]; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  void append_parameters(const std::string& prefix, NamedParameters& out) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

class Mlp {
 public:
  // sizes = {in, hidden..., out}; one activation per layer.
  Mlp(const std::vector<std::size_t>& sizes, std::vector<Activation> activations,
      RandomStream& rng);
  Mlp(std::vector<Linear> layers, std::vector<Activation> activations);

  Tensor forward(const Tensor& x) const;
  // Deep copy with fresh parameter storage.
  Mlp clone() const;

  // Gradient of a scalar-output network with respect to its input, built from
  // ordinary tape ops so it can itself be differentiated w.r.t. the weights.
  Tensor input_gradient(const Tensor& x) const;

  const std::vector<Linear>& layers() const { return layers_; }
  const std::vector<Activation>& activations() const { return activations_; }
  NamedParameters named_parameters(const std::string& prefix = "mlp") const;

 private:
  std::vector<Linear> layers_;
  std::vector<Activation> activations_;
};

Tensor huber(const Tensor& a, double delta);
Tensor mse(const Tensor& prediction, const Tensor& target);

}  // namespace novas::nn
