#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstring>

#include "d2f/tensor.hpp"

// Plain (non-recording) tensor kernels. The autodiff layer in
// d2f/autodiff.hpp calls these for its forward values.
namespace d2f::ops {

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

template <class T, class F>
BasicTensor<T> map(const BasicTensor<T>& a, F f) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<T>(f(a[i]));
  return out;
}

template <class T, class F>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op, F f) {
  require_same_shape(a.shape(), b.shape(), op);
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<T>(f(a[i], b[i]));
  return out;
}

}  // namespace detail

template <class T>
T sigmoid_scalar(T x) {
  // Split on sign so neither branch overflows exp(); the clamp keeps the
  // result inside the open unit interval once it saturates.
  T v;
  if (x >= T{0}) {
    v = T{1} / (T{1} + std::exp(-x));
  } else {
    const T z = std::exp(x);
    v = z / (T{1} + z);
  }
  return std::clamp(v, std::numeric_limits<T>::min(), std::nextafter(T{1}, T{0}));
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::zip(a, b, "add", [](T x, T y) { return x + y; });
}
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::zip(a, b, "sub", [](T x, T y) { return x - y; });
}
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::zip(a, b, "mul", [](T x, T y) { return x * y; });
}
template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, T s) {
  return detail::map(a, [s](T x) { return x + s; });
}
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, T s) {
  return detail::map(a, [s](T x) { return x * s; });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
  return detail::map(a, [](T x) { return x > T{0} ? x : T{0}; });
}
template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a) {
  return detail::map(a, [](T x) { return sigmoid_scalar(x); });
}
template <class T>
BasicTensor<T> abs(const BasicTensor<T>& a) {
  return detail::map(a, [](T x) { return std::abs(x); });
}
template <class T>
BasicTensor<T> sin(const BasicTensor<T>& a) {
  return detail::map(a, [](T x) { return std::sin(x); });
}
template <class T>
BasicTensor<T> cos(const BasicTensor<T>& a) {
  return detail::map(a, [](T x) { return std::cos(x); });
}
template <class T>
BasicTensor<T> sqrt(const BasicTensor<T>& a) {
  return detail::map(a, [](T x) {
    if (x < T{0}) throw DomainError("sqrt of negative value");
    return std::sqrt(x);
  });
}
template <class T>
BasicTensor<T> square(const BasicTensor<T>& a) {
  return detail::map(a, [](T x) { return x * x; });
}

// Sum of all entries, accumulated in at least double precision.
template <class T>
accum_t<T> sum(const BasicTensor<T>& a) {
  accum_t<T> acc = 0.0;
  for (auto v : a.values()) acc += static_cast<accum_t<T>>(v);
  return acc;
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be 2-D");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  BasicTensor<T> out(Shape{m, n});
  std::vector<accum_t<T>> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const accum_t<T> aip = a(i, p);
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * static_cast<accum_t<T>>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) = static_cast<T>(row[j]);
  }
  return out;
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: operand must be 2-D");
  BasicTensor<T> out(Shape{a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out(j, i) = a(i, j);
  return out;
}

// 1x1 convolution: a channel-mixing linear map shared across every position.
// X has the channel axis first; all trailing axes are positions. With rank-1
// X the single position is the vector itself.
template <class T>
BasicTensor<T> conv1x1(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                       const BasicTensor<T>* bias = nullptr) {
  if (kernel.rank() != 2) throw ShapeError("conv1x1: kernel must be 2-D");
  const std::size_t cin = x.dim(0);
  const std::size_t cout = kernel.dim(0);
  if (kernel.dim(1) != cin) {
    throw ShapeError("conv1x1: kernel " + shape_string(kernel.shape()) + " does not match " +
                     std::to_string(cin) + " input channels");
  }
  if (bias && bias->size() != cout) throw ShapeError("conv1x1: bias length mismatch");
  const std::size_t positions = x.size() / cin;
  Shape out_shape = x.shape();
  out_shape[0] = cout;
  BasicTensor<T> out(out_shape);
  std::vector<accum_t<T>> acc(positions);
  for (std::size_t o = 0; o < cout; ++o) {
    std::fill(acc.begin(), acc.end(), bias ? static_cast<accum_t<T>>((*bias)[o]) : 0.0);
    for (std::size_t i = 0; i < cin; ++i) {
      const accum_t<T> k = kernel(o, i);
      const T* xrow = x.data() + i * positions;
      for (std::size_t p = 0; p < positions; ++p) acc[p] += k * static_cast<accum_t<T>>(xrow[p]);
    }
    T* orow = out.data() + o * positions;
    for (std::size_t p = 0; p < positions; ++p) orow[p] = static_cast<T>(acc[p]);
  }
  return out;
}

template <class T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <class T>
accum_t<T> max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  accum_t<T> m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<accum_t<T>>(a[i]) - static_cast<accum_t<T>>(b[i])));
  return m;
}

}  // namespace d2f::ops
