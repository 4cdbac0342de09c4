#include "novas/core/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace novas {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void TensorImpl::accumulate_grad(std::size_t index, double value) {
  ensure_grad()[index] += value;
}

namespace {

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

TensorImpl& checked(const std::shared_ptr<TensorImpl>& impl) {
  if (!impl) throw std::logic_error("use of an undefined tensor");
  return *impl;
}

thread_local bool t_grad_mode = true;

}  // namespace

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }

Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(new_impl(shape, std::vector<double>(shape_numel(shape), value)));
}

Tensor Tensor::scalar(double value) { return Tensor(new_impl({}, {value})); }

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
  return Tensor(new_impl(shape, std::move(values)));
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(new_impl(std::move(shape), std::move(values)));
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }
std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::size_t Tensor::size(int axis) const {
  const auto& s = shape();
  const int n = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(s));
  }
  return s[static_cast<std::size_t>(a)];
}

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() { return checked(impl_).data; }

std::vector<double> Tensor::to_vector() const { return checked(impl_).data; }

double Tensor::item() const {
  const auto& impl = checked(impl_);
  if (impl.data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(impl.shape));
  }
  return impl.data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& impl = checked(impl_);
  if (index.size() != impl.shape.size()) {
    throw ShapeError("index rank mismatch for shape " + shape_string(impl.shape));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= impl.shape[axis]) throw ShapeError("index out of range");
    flat = flat * impl.shape[axis] + i;
    ++axis;
  }
  return impl.data[flat];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  auto& impl = checked(impl_);
  if (!impl.is_leaf) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  impl.requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return checked(impl_).is_leaf; }
bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(impl_).grad; }

Tensor Tensor::grad_tensor() const {
  const auto& impl = checked(impl_);
  if (impl.grad.empty()) return zeros(impl.shape);
  return from(impl.shape, impl.grad);
}

void Tensor::zero_grad() { checked(impl_).grad.clear(); }

Tensor Tensor::detach() const {
  const auto& impl = checked(impl_);
  return Tensor(new_impl(impl.shape, impl.data));
}

Tensor Tensor::clone() const {
  const auto& impl = checked(impl_);
  auto copy = new_impl(impl.shape, impl.data);
  copy->requires_grad = impl.requires_grad && impl.is_leaf;
  return Tensor(copy);
}

void Tensor::backward() const { Tape::current().backward(*this); }

// ---------------------------------------------------------------------------

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::clear() {
  nodes_.clear();
  recorded_elements_ = 0;
}

void Tape::record(TapeNode node) {
  recorded_elements_ += node.output->data.size();
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw std::logic_error("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     shape_string(loss.shape()));
  }
  if (!std::isfinite(loss.item())) {
    throw NumericError("non-finite loss: " + std::to_string(loss.item()));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("loss does not depend on any tensor requiring grad");
  }
  for (auto& node : nodes_) node.output->grad.clear();
  loss.impl()->accumulate_grad(0, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

bool grad_mode_enabled() { return t_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(t_grad_mode) { t_grad_mode = false; }
NoGradGuard::~NoGradGuard() { t_grad_mode = previous_; }

Tensor make_result(const char* name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward) {
  auto out = new_impl(std::move(shape), std::move(data));
  if (!t_grad_mode) return Tensor(out);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return Tensor(out);

  out->requires_grad = true;
  out->is_leaf = false;
  TapeNode node;
  node.name = name;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) node.inputs.push_back(in.impl_ptr());
  node.output = out;
  TensorImpl* raw = out.get();
  node.backward = [raw, fn = std::move(backward)] { fn(*raw); };
  Tape::current().record(std::move(node));
  return Tensor(out);
}

}  // namespace novas
