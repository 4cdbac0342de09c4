#include "novas/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace novas {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int n = static_cast<int>(rank);
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw ShapeError("axis " + std::to_string(axis) + " invalid for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// Strides of `in` when viewed in the index space of the broadcast shape `out`.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[i + offset] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

template <class F>
void broadcast_loop(const Shape& out, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t total = shape_numel(out);
  if (total == 0) return;
  const std::size_t nd = out.size();
  if (nd == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = out[nd - 1];
  const std::size_t step_a = sa[nd - 1];
  const std::size_t step_b = sb[nd - 1];
  const std::size_t outer = total / inner;
  std::vector<std::size_t> idx(nd - 1, 0);
  std::size_t base_a = 0, base_b = 0, o = 0;
  for (std::size_t r = 0; r < outer; ++r) {
    std::size_t pa = base_a, pb = base_b;
    for (std::size_t j = 0; j < inner; ++j) {
      f(o++, pa, pb);
      pa += step_a;
      pb += step_b;
    }
    for (std::size_t ax = nd - 1; ax-- > 0;) {
      ++idx[ax];
      base_a += sa[ax];
      base_b += sb[ax];
      if (idx[ax] < out[ax]) break;
      base_a -= sa[ax] * out[ax];
      base_b -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

// Elementwise binary op. fwd(x, y) -> z; grad_a/grad_b(x, y, z) -> dz/dx, dz/dy.
template <class Fwd, class GradA, class GradB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, GradA grad_a,
              GradB grad_b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  std::vector<double> out(shape_numel(out_shape));
  const auto& xa = a.impl()->data;
  const auto& xb = b.impl()->data;
  const bool same = a.shape() == b.shape();
  std::vector<std::size_t> sa, sb;
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xa[i], xb[i]);
  } else {
    sa = broadcast_strides(a.shape(), out_shape);
    sb = broadcast_strides(b.shape(), out_shape);
    broadcast_loop(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      out[o] = fwd(xa[ia], xb[ib]);
    });
  }
  ImplPtr pa = a.impl_ptr(), pb = b.impl_ptr();
  return make_result(
      name, out_shape, std::move(out), {a, b},
      [pa, pb, same, out_shape, sa, sb, grad_a, grad_b](const TensorImpl& res) {
        const auto& g = res.grad;
        const auto& z = res.data;
        const auto& x = pa->data;
        const auto& y = pb->data;
        const bool need_a = pa->requires_grad;
        const bool need_b = pb->requires_grad;
        double* ga = need_a ? pa->ensure_grad().data() : nullptr;
        double* gb = need_b ? pb->ensure_grad().data() : nullptr;
        if (same) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (need_a) ga[i] += g[i] * grad_a(x[i], y[i], z[i]);
            if (need_b) gb[i] += g[i] * grad_b(x[i], y[i], z[i]);
          }
          return;
        }
        broadcast_loop(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          if (need_a) ga[ia] += g[o] * grad_a(x[ia], y[ib], z[o]);
          if (need_b) gb[ib] += g[o] * grad_b(x[ia], y[ib], z[o]);
        });
      });
}

// Elementwise unary op. deriv(x, y) -> dy/dx.
template <class Fwd, class Deriv>
Tensor unary(const char* name, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto& x = a.impl()->data;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  ImplPtr pa = a.impl_ptr();
  return make_result(name, a.shape(), std::move(out), {a}, [pa, deriv](const TensorImpl& res) {
    auto& ga = pa->ensure_grad();
    const auto& g = res.grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(pa->data[i], res.data[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}


struct AxisView {
  std::size_t outer, len, inner;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

// Reduction that selects one entry per slice; `pick` returns the index
// within the slice given a strided accessor.
template <class Pick>
Tensor select_reduce(const char* name, const Tensor& a, int axis, bool keepdim, Pick pick) {
  const std::size_t ax = normalize_axis(axis, a.dim());
  const AxisView v = axis_view(a.shape(), ax);
  if (v.len == 0) throw ShapeError(std::string(name) + " over an empty axis");
  const auto& x = a.impl()->data;
  std::vector<double> out(v.outer * v.inner);
  std::vector<std::size_t> chosen(out.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      auto at = [&](std::size_t j) { return x[base + j * v.inner]; };
      const std::size_t j = pick(at, v.len);
      out[o * v.inner + i] = at(j);
      chosen[o * v.inner + i] = base + j * v.inner;
    }
  }
  ImplPtr pa = a.impl_ptr();
  return make_result(name, reduced_shape(a.shape(), ax, keepdim), std::move(out), {a},
                     [pa, chosen = std::move(chosen)](const TensorImpl& res) {
                       auto& ga = pa->ensure_grad();
                       for (std::size_t k = 0; k < chosen.size(); ++k) ga[chosen[k]] += res.grad[k];
                     });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    const std::size_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + shape_string(a) + " and " + shape_string(b) +
                       " are not broadcast-compatible");
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.data()) {
    if (y == 0.0) {
      throw NumericError("division by zero (denominator shape " + shape_string(b.shape()) +
                         ")");
    }
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary("mul_scalar", a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor rsub_scalar(double c, const Tensor& a) {
  return unary("rsub_scalar", a, [c](double x) { return c - x; }, [](double, double) { return -1.0; });
}

Tensor maximum(const Tensor& a, double c) {
  return unary(
      "maximum", a, [c](double x) { return x > c ? x : c; },
      [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

Tensor minimum(const Tensor& a, double c) {
  return unary(
      "minimum", a, [c](double x) { return x < c ? x : c; },
      [c](double x, double) { return x < c ? 1.0 : 0.0; });
}

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  const auto& x = a.impl()->data;
  std::vector<double> out(x.size());
  const Eigen::Map<const Eigen::ArrayXd> in(x.data(), static_cast<Eigen::Index>(x.size()));
  // log1p(t) = log(u) * t / (u - 1) with u = 1 + t stays exact and vectorizes.
  const Eigen::ArrayXd t = (-in.abs()).exp();
  const Eigen::ArrayXd u = 1.0 + t;
  Eigen::Map<Eigen::ArrayXd>(out.data(), static_cast<Eigen::Index>(out.size())) =
      in.max(0.0) + (u == 1.0).select(t, u.log() * t / (u - 1.0));
  ImplPtr pa = a.impl_ptr();
  return make_result("softplus", a.shape(), std::move(out), {a}, [pa](const TensorImpl& res) {
    auto& ga = pa->ensure_grad();
    const auto& g = res.grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * stable_sigmoid(pa->data[i]);
  });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor sin(const Tensor& a) {
  return unary("sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary("cos", a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) { return neg(a); }
Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
Tensor operator+(double c, const Tensor& a) { return add_scalar(a, c); }
Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
Tensor operator-(double c, const Tensor& a) { return rsub_scalar(c, a); }
Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }

Tensor operator/(const Tensor& a, double c) {
  if (c == 0.0) throw NumericError("division by zero scalar");
  return mul_scalar(a, 1.0 / c);
}

Tensor operator/(double c, const Tensor& a) { return div(Tensor::full(a.shape(), c), a); }

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.shape()[0]);
  const auto k = static_cast<Eigen::Index>(a.shape()[1]);
  const auto n = static_cast<Eigen::Index>(b.shape()[1]);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.impl()->data.data(), m, k) * ConstMap(b.impl()->data.data(), k, n);
  ImplPtr pa = a.impl_ptr(), pb = b.impl_ptr();
  return make_result("matmul", {a.shape()[0], b.shape()[1]}, std::move(out), {a, b},
                     [pa, pb, m, k, n](const TensorImpl& res) {
                       ConstMap g(res.grad.data(), m, n);
                       if (pa->requires_grad) {
                         MutMap(pa->ensure_grad().data(), m, k).noalias() +=
                             g * ConstMap(pb->data.data(), k, n).transpose();
                       }
                       if (pb->requires_grad) {
                         MutMap(pb->ensure_grad().data(), k, n).noalias() +=
                             ConstMap(pa->data.data(), m, k).transpose() * g;
                       }
                     });
}

Tensor matvec(const Tensor& a, const Tensor& v) {
  if (a.dim() != 3 || v.dim() != 2 || a.shape()[0] != v.shape()[0] ||
      a.shape()[2] != v.shape()[1]) {
    throw ShapeError("matvec: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(v.shape()));
  }
  const std::size_t batch = a.shape()[0], m = a.shape()[1], n = a.shape()[2];
  const auto& x = a.impl()->data;
  const auto& y = v.impl()->data;
  std::vector<double> out(batch * m, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += x[(b * m + i) * n + j] * y[b * n + j];
      out[b * m + i] = acc;
    }
  }
  ImplPtr pa = a.impl_ptr(), pv = v.impl_ptr();
  return make_result("matvec", {batch, m}, std::move(out), {a, v},
                     [pa, pv, batch, m, n](const TensorImpl& res) {
                       const auto& g = res.grad;
                       if (pa->requires_grad) {
                         auto& ga = pa->ensure_grad();
                         for (std::size_t b = 0; b < batch; ++b)
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j)
                               ga[(b * m + i) * n + j] += g[b * m + i] * pv->data[b * n + j];
                       }
                       if (pv->requires_grad) {
                         auto& gv = pv->ensure_grad();
                         for (std::size_t b = 0; b < batch; ++b)
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j)
                               gv[b * n + j] += g[b * m + i] * pa->data[(b * m + i) * n + j];
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.dim() != 2) throw ShapeError("transpose expects a matrix, got " + shape_string(a.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  const auto& x = a.impl()->data;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  ImplPtr pa = a.impl_ptr();
  return make_result("transpose", {c, r}, std::move(out), {a}, [pa, r, c](const TensorImpl& res) {
    auto& ga = pa->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += res.grad[j * r + i];
  });
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a, int axis, bool keepdim) {
  const std::size_t ax = normalize_axis(axis, a.dim());
  const AxisView v = axis_view(a.shape(), ax);
  const auto& x = a.impl()->data;
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t j = 0; j < v.len; ++j)
      for (std::size_t i = 0; i < v.inner; ++i)
        out[o * v.inner + i] += x[(o * v.len + j) * v.inner + i];
  ImplPtr pa = a.impl_ptr();
  return make_result("sum", reduced_shape(a.shape(), ax, keepdim), std::move(out), {a},
                     [pa, v](const TensorImpl& res) {
                       auto& ga = pa->ensure_grad();
                       for (std::size_t o = 0; o < v.outer; ++o)
                         for (std::size_t j = 0; j < v.len; ++j)
                           for (std::size_t i = 0; i < v.inner; ++i)
                             ga[(o * v.len + j) * v.inner + i] += res.grad[o * v.inner + i];
                     });
}

Tensor mean(const Tensor& a, int axis, bool keepdim) {
  const std::size_t len = a.size(axis);
  if (len == 0) throw ShapeError("mean over an empty axis");
  return mul_scalar(sum(a, axis, keepdim), 1.0 / static_cast<double>(len));
}

Tensor sum_all(const Tensor& a) {
  const auto& x = a.impl()->data;
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  ImplPtr pa = a.impl_ptr();
  return make_result("sum_all", {}, {total}, {a}, [pa](const TensorImpl& res) {
    auto& ga = pa->ensure_grad();
    for (double& g : ga) g += res.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor max(const Tensor& a, int axis, bool keepdim) {
  return select_reduce("max", a, axis, keepdim, [](auto at, std::size_t len) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < len; ++j)
      if (at(j) > at(best)) best = j;
    return best;
  });
}

Tensor min(const Tensor& a, int axis, bool keepdim) {
  return select_reduce("min", a, axis, keepdim, [](auto at, std::size_t len) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < len; ++j)
      if (at(j) < at(best)) best = j;
    return best;
  });
}

Tensor kth_largest(const Tensor& a, int axis, std::size_t k, bool keepdim) {
  if (k == 0 || k > a.size(axis)) {
    throw std::invalid_argument("kth_largest: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(a.size(axis)) + "]");
  }
  return select_reduce("kth_largest", a, axis, keepdim, [k](auto at, std::size_t len) {
    std::vector<std::size_t> order(len);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     order.end(), [&](std::size_t l, std::size_t r) {
                       return at(l) > at(r) || (at(l) == at(r) && l < r);
                     });
    return order[k - 1];
  });
}

Tensor softmax(const Tensor& a, int axis) {
  const std::size_t ax = normalize_axis(axis, a.dim());
  const AxisView v = axis_view(a.shape(), ax);
  const auto& x = a.impl()->data;
  for (double xi : x) {
    if (std::isnan(xi)) throw NumericError("softmax: NaN input");
  }
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < v.len; ++j) peak = std::max(peak, x[base + j * v.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < v.len; ++j) {
        const double e = std::exp(x[base + j * v.inner] - peak);
        out[base + j * v.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < v.len; ++j) out[base + j * v.inner] /= total;
    }
  }
  ImplPtr pa = a.impl_ptr();
  return make_result("softmax", a.shape(), std::move(out), {a}, [pa, v](const TensorImpl& res) {
    auto& ga = pa->ensure_grad();
    const auto& y = res.data;
    const auto& g = res.grad;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.len * v.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < v.len; ++j) dot += g[base + j * v.inner] * y[base + j * v.inner];
        for (std::size_t j = 0; j < v.len; ++j) {
          const std::size_t p = base + j * v.inner;
          ga[p] += y[p] * (g[p] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t rank = parts.front().dim();
  const std::size_t ax = normalize_axis(axis, rank);
  Shape out_shape = parts.front().shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != rank) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < rank; ++i) {
      if (i != ax && s[i] != parts.front().shape()[i]) {
        throw ShapeError("concat: shapes " + shape_string(parts.front().shape()) + " and " +
                         shape_string(s) + " differ off the concat axis");
      }
    }
    out_shape[ax] += s[ax];
  }
  const AxisView v = axis_view(out_shape, ax);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.shape()[ax];
    const auto& x = p.impl()->data;
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * len * v.inner), len * v.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * v.len + offset) * v.inner));
    offsets.push_back(offset);
    offset += len;
  }
  std::vector<ImplPtr> impls;
  for (const auto& p : parts) impls.push_back(p.impl_ptr());
  return make_result("concat", out_shape, std::move(out), parts,
                     [impls, offsets, v, ax](const TensorImpl& res) {
                       for (std::size_t k = 0; k < impls.size(); ++k) {
                         auto& in = *impls[k];
                         if (!in.requires_grad) continue;
                         const std::size_t len = in.shape[ax];
                         auto& gi = in.ensure_grad();
                         for (std::size_t o = 0; o < v.outer; ++o)
                           for (std::size_t r = 0; r < len * v.inner; ++r)
                             gi[o * len * v.inner + r] +=
                                 res.grad[(o * v.len + offsets[k]) * v.inner + r];
                       }
                     });
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, a.dim());
  if (begin > end || end > a.shape()[ax]) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for shape " + shape_string(a.shape()));
  }
  const AxisView v = axis_view(a.shape(), ax);
  const std::size_t len = end - begin;
  Shape out_shape = a.shape();
  out_shape[ax] = len;
  const auto& x = a.impl()->data;
  std::vector<double> out(v.outer * len * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((o * v.len + begin) * v.inner),
                len * v.inner, out.begin() + static_cast<std::ptrdiff_t>(o * len * v.inner));
  ImplPtr pa = a.impl_ptr();
  return make_result("slice", out_shape, std::move(out), {a},
                     [pa, v, begin, len](const TensorImpl& res) {
                       auto& ga = pa->ensure_grad();
                       for (std::size_t o = 0; o < v.outer; ++o)
                         for (std::size_t r = 0; r < len * v.inner; ++r)
                           ga[(o * v.len + begin) * v.inner + r] += res.grad[o * len * v.inner + r];
                     });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (broadcast_shape(a.shape(), shape) != shape) {
    throw ShapeError("cannot broadcast " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  if (a.shape() == shape) return a;
  const auto sa = broadcast_strides(a.shape(), shape);
  const std::vector<std::size_t> zero(shape.size(), 0);
  const auto& x = a.impl()->data;
  std::vector<double> out(shape_numel(shape));
  broadcast_loop(shape, sa, zero, [&](std::size_t o, std::size_t ia, std::size_t) { out[o] = x[ia]; });
  ImplPtr pa = a.impl_ptr();
  return make_result("broadcast_to", shape, std::move(out), {a},
                     [pa, shape, sa, zero](const TensorImpl& res) {
                       auto& ga = pa->ensure_grad();
                       broadcast_loop(shape, sa, zero, [&](std::size_t o, std::size_t ia, std::size_t) {
                         ga[ia] += res.grad[o];
                       });
                     });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  ImplPtr pa = a.impl_ptr();
  return make_result("reshape", shape, a.impl()->data, {a}, [pa](const TensorImpl& res) {
    auto& ga = pa->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += res.grad[i];
  });
}

Tensor Tensor::reshape(const Shape& shape) const { return novas::reshape(*this, shape); }

}  // namespace novas
