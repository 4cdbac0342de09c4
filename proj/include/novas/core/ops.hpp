#pragma once

#include <vector>

#include "novas/core/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops broadcast with
// numpy semantics; a broadcast operand's gradient is summed over the axes it
// was expanded along.
namespace novas {

Shape broadcast_shape(const Shape& a, const Shape& b);

// Elementwise, binary.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Elementwise with a constant.
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor rsub_scalar(double c, const Tensor& a);  // c - a
Tensor maximum(const Tensor& a, double c);
Tensor minimum(const Tensor& a, double c);

// Elementwise, unary.
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator+(const Tensor& a, double c);
Tensor operator+(double c, const Tensor& a);
Tensor operator-(const Tensor& a, double c);
Tensor operator-(double c, const Tensor& a);
Tensor operator*(const Tensor& a, double c);
Tensor operator*(double c, const Tensor& a);
Tensor operator/(const Tensor& a, double c);
Tensor operator/(double c, const Tensor& a);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matvec(const Tensor& a, const Tensor& v);     // [B,m,n] x [B,n] -> [B,m]
Tensor transpose(const Tensor& a);                   // 2-D only

// Reductions. Negative axes count from the back.
Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor mean(const Tensor& a, int axis, bool keepdim = false);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor max(const Tensor& a, int axis, bool keepdim = false);
Tensor min(const Tensor& a, int axis, bool keepdim = false);
// k-th largest entry along an axis (k = 1 is the maximum). Gradient goes to
// the selected entry.
Tensor kth_largest(const Tensor& a, int axis, std::size_t k, bool keepdim = false);

Tensor softmax(const Tensor& a, int axis);

// Shape manipulation.
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor reshape(const Tensor& a, const Shape& shape);

}  // namespace novas
