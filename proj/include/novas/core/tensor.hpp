#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace novas {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  bool is_leaf = true;

  void accumulate_grad(std::size_t index, double value);
  std::vector<double>& ensure_grad();
};

// Dense row-major array of doubles. Copies share storage; use clone() for a
// deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);
  static Tensor from(const Shape& shape, std::vector<double> values);
  static Tensor vector(std::vector<double> values);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t size(int axis) const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  // Marks a leaf as trainable. Throws for non-leaf tensors.
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;
  Tensor reshape(const Shape& shape) const;

  void backward() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape

struct TapeNode {
  const char* name = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  // Reads output->grad and accumulates into inputs that require grad.
  std::function<void()> backward;
};

class Tape {
 public:
  // Each thread records onto its own tape.
  static Tape& current();

  std::size_t size() const { return nodes_.size(); }
  // Sum of output element counts over recorded nodes.
  std::size_t recorded_elements() const { return recorded_elements_; }
  void clear();
  void record(TapeNode node);
  void backward(const Tensor& loss);

 private:
  std::vector<TapeNode> nodes_;
  std::size_t recorded_elements_ = 0;
};

bool grad_mode_enabled();

// Suppresses recording for its lifetime. Nesting is idempotent.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class F>
auto no_grad(F&& body) {
  NoGradGuard guard;
  return body();
}

// Builds an op result. When grad mode is on and any input requires grad, the
// result is recorded on the current tape with the given backward rule; the
// rule receives the result's impl so it can read its gradient.
Tensor make_result(const char* name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);

}  // namespace novas
