#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "d2f/ops.hpp"

namespace d2f {

// A learnable tensor and its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> gradient;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), gradient(value.shape()) {}

  void zero_grad() { gradient.fill(T{0}); }
};

template <class T>
class Tape;

// Handle to a value recorded on a Tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const BasicTensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode differentiation over whole-tensor operations. Nodes are
// appended in evaluation order, so reverse insertion order is a valid
// topological order for the backward sweep.
template <class T>
class Tape {
 public:
  using TensorT = BasicTensor<T>;
  using Backward = std::function<void(Tape&, const TensorT&)>;

  Var<T> constant(TensorT v) { return push(std::move(v), false, nullptr, {}); }

  // Leaf whose gradient is retrievable via grad() after backward().
  Var<T> input(TensorT v) { return push(std::move(v), true, nullptr, {}); }

  // Leaf bound to a Parameter; backward() adds into parameter.gradient.
  Var<T> watch(Parameter<T>& p) { return push(p.value, true, &p, {}); }

  Var<T> record(TensorT value, std::initializer_list<Var<T>> parents, Backward fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id].requires_grad;
    return push(std::move(value), needs, nullptr, needs ? std::move(fn) : Backward{});
  }

  const TensorT& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient of the last backward() output with respect to v (zeros if v
  // was unreachable).
  TensorT grad(Var<T> v) const {
    const auto& n = nodes_.at(v.id);
    return n.grad ? *n.grad : TensorT(n.value.shape());
  }

  void accumulate(Var<T> v, const TensorT& g) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (!n.grad) {
      n.grad = g;
      return;
    }
    auto& dst = *n.grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  void backward(Var<T> out) {
    if (out.tape != this) throw ContractError("backward: variable belongs to another tape");
    if (value(out).size() != 1) {
      throw ContractError("backward: output must be a scalar, got shape " +
                          shape_string(value(out).shape()));
    }
    for (auto& n : nodes_) n.grad.reset();
    nodes_[out.id].grad = TensorT(value(out).shape(), T{1});
    for (std::size_t i = out.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.grad) continue;
      if (n.backward) {
        TensorT g = *n.grad;
        n.backward(*this, g);
      }
    }
    for (auto& n : nodes_) {
      if (n.param && n.grad) {
        auto& dst = n.param->gradient;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += (*n.grad)[k];
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    TensorT value;
    bool requires_grad;
    Parameter<T>* param;
    Backward backward;
    std::optional<TensorT> grad;
  };

  Var<T> push(TensorT v, bool needs_grad, Parameter<T>* param, Backward fn) {
    nodes_.push_back(Node{std::move(v), needs_grad, param, std::move(fn), std::nullopt});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

template <class T>
void zero_grad(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

// Plain gradient descent; gradients are cleared after the update.
template <class T>
void sgd_step(const std::vector<Parameter<T>*>& params, double learning_rate) {
  if (!(learning_rate >= 0.0)) throw DomainError("sgd_step: learning rate must be nonnegative");
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->value[i] = static_cast<T>(static_cast<accum_t<T>>(p->value[i]) -
                                   static_cast<accum_t<T>>(learning_rate) *
                                       static_cast<accum_t<T>>(p->gradient[i]));
    }
    p->zero_grad();
  }
}

// Differentiable operations. Each computes its forward value with the plain
// kernels and records the vector-Jacobian product for the backward sweep.
namespace ag {

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& t = *a.tape;
  return t.record(ops::add(a.value(), b.value()), {a, b}, [a, b](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  auto& t = *a.tape;
  return t.record(ops::sub(a.value(), b.value()), {a, b}, [a, b](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, ops::mul(g, T{-1}));
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto& t = *a.tape;
  return t.record(ops::mul(a.value(), b.value()), {a, b}, [a, b](Tape<T>& tp, const BasicTensor<T>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, ops::mul(g, b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, ops::mul(g, a.value()));
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  return a.tape->record(ops::mul(a.value(), s), {a}, [a, s](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(a, ops::mul(g, s));
  });
}

template <class T>
Var<T> add_scalar(Var<T> a, T s) {
  return a.tape->record(ops::add(a.value(), s), {a},
                        [a](Tape<T>& tp, const BasicTensor<T>& g) { tp.accumulate(a, g); });
}

template <class T>
Var<T> relu(Var<T> a) {
  return a.tape->record(ops::relu(a.value()), {a}, [a](Tape<T>& tp, const BasicTensor<T>& g) {
    const auto& x = a.value();
    BasicTensor<T> d(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] > T{0} ? g[i] : T{0};
    tp.accumulate(a, d);
  });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  auto y = ops::sigmoid(a.value());
  return a.tape->record(y, {a}, [a, y](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> d(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) d[i] = g[i] * y[i] * (T{1} - y[i]);
    tp.accumulate(a, d);
  });
}

template <class T>
Var<T> abs(Var<T> a) {
  return a.tape->record(ops::abs(a.value()), {a}, [a](Tape<T>& tp, const BasicTensor<T>& g) {
    const auto& x = a.value();
    BasicTensor<T> d(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      d[i] = x[i] > T{0} ? g[i] : (x[i] < T{0} ? -g[i] : T{0});
    }
    tp.accumulate(a, d);
  });
}

template <class T>
Var<T> sin(Var<T> a) {
  return a.tape->record(ops::sin(a.value()), {a}, [a](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(a, ops::mul(g, ops::cos(a.value())));
  });
}

template <class T>
Var<T> cos(Var<T> a) {
  return a.tape->record(ops::cos(a.value()), {a}, [a](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(a, ops::mul(g, ops::mul(ops::sin(a.value()), T{-1})));
  });
}

template <class T>
Var<T> square(Var<T> a) {
  return a.tape->record(ops::square(a.value()), {a}, [a](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(a, ops::mul(ops::mul(g, a.value()), T{2}));
  });
}

template <class T>
Var<T> sqrt(Var<T> a) {
  auto y = ops::sqrt(a.value());
  return a.tape->record(y, {a}, [a, y](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> d(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) d[i] = y[i] > T{0} ? g[i] / (T{2} * y[i]) : T{0};
    tp.accumulate(a, d);
  });
}

template <class T>
Var<T> sum(Var<T> a) {
  auto s = BasicTensor<T>::scalar(static_cast<T>(ops::sum(a.value())));
  return a.tape->record(s, {a}, [a](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(a, BasicTensor<T>(a.shape(), g[0]));
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), static_cast<T>(1.0 / static_cast<accum_t<T>>(a.value().size())));
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  return a.tape->record(a.value().reshaped(shape), {a}, [a](Tape<T>& tp, const BasicTensor<T>& g) {
    tp.accumulate(a, g.reshaped(a.shape()));
  });
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  return a.tape->record(ops::matmul(a.value(), b.value()), {a, b},
                        [a, b](Tape<T>& tp, const BasicTensor<T>& g) {
                          if (tp.requires_grad(a))
                            tp.accumulate(a, ops::matmul(g, ops::transpose(b.value())));
                          if (tp.requires_grad(b))
                            tp.accumulate(b, ops::matmul(ops::transpose(a.value()), g));
                        });
}

namespace detail {

// Gradients of a 1x1 convolution viewed as kernel (Co x Ci) times the
// input flattened to Ci x P.
template <class T>
void conv1x1_backward(Tape<T>& tp, Var<T> x, Var<T> kernel, const Var<T>* bias,
                      const BasicTensor<T>& g) {
  const auto& xv = x.value();
  const std::size_t cin = xv.dim(0);
  const std::size_t positions = xv.size() / cin;
  const std::size_t cout = kernel.value().dim(0);
  auto g2 = g.reshaped(Shape{cout, positions});
  if (tp.requires_grad(x)) {
    auto dx = ops::matmul(ops::transpose(kernel.value()), g2);
    tp.accumulate(x, dx.reshaped(xv.shape()));
  }
  if (tp.requires_grad(kernel)) {
    auto x2 = xv.reshaped(Shape{cin, positions});
    tp.accumulate(kernel, ops::matmul(g2, ops::transpose(x2)));
  }
  if (bias && tp.requires_grad(*bias)) {
    BasicTensor<T> db(bias->value().shape());
    for (std::size_t o = 0; o < cout; ++o) {
      accum_t<T> acc = 0.0;
      for (std::size_t p = 0; p < positions; ++p) acc += g2(o, p);
      db[o] = static_cast<T>(acc);
    }
    tp.accumulate(*bias, db);
  }
}

}  // namespace detail

template <class T>
Var<T> conv1x1(Var<T> x, Var<T> kernel) {
  return x.tape->record(ops::conv1x1(x.value(), kernel.value()), {x, kernel},
                        [x, kernel](Tape<T>& tp, const BasicTensor<T>& g) {
                          detail::conv1x1_backward(tp, x, kernel, static_cast<const Var<T>*>(nullptr), g);
                        });
}

template <class T>
Var<T> conv1x1(Var<T> x, Var<T> kernel, Var<T> bias) {
  return x.tape->record(ops::conv1x1(x.value(), kernel.value(), &bias.value()), {x, kernel, bias},
                        [x, kernel, bias](Tape<T>& tp, const BasicTensor<T>& g) {
                          detail::conv1x1_backward(tp, x, kernel, &bias, g);
                        });
}

// C x H x W -> C x H, mean over the width axis.
template <class T>
Var<T> pool_rows(Var<T> x) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("pool_rows: expected C x H x W");
  const std::size_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  BasicTensor<T> out(Shape{C, H});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H; ++h) {
      accum_t<T> acc = 0.0;
      for (std::size_t w = 0; w < W; ++w) acc += xv(c, h, w);
      out(c, h) = static_cast<T>(acc / static_cast<accum_t<T>>(W));
    }
  return x.tape->record(out, {x}, [x, C, H, W](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> d(Shape{C, H, W});
    const T inv = static_cast<T>(1.0 / static_cast<accum_t<T>>(W));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) d(c, h, w) = g(c, h) * inv;
    tp.accumulate(x, d);
  });
}

// C x H x W -> C x W, mean over the height axis.
template <class T>
Var<T> pool_cols(Var<T> x) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("pool_cols: expected C x H x W");
  const std::size_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  BasicTensor<T> out(Shape{C, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t w = 0; w < W; ++w) {
      accum_t<T> acc = 0.0;
      for (std::size_t h = 0; h < H; ++h) acc += xv(c, h, w);
      out(c, w) = static_cast<T>(acc / static_cast<accum_t<T>>(H));
    }
  return x.tape->record(out, {x}, [x, C, H, W](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> d(Shape{C, H, W});
    const T inv = static_cast<T>(1.0 / static_cast<accum_t<T>>(H));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) d(c, h, w) = g(c, w) * inv;
    tp.accumulate(x, d);
  });
}

// [C x A] ++ [C x B] -> C x (A + B)
template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0))
    throw ShapeError("concat_cols: operands must be 2-D with equal row counts");
  const std::size_t R = av.dim(0), A = av.dim(1), B = bv.dim(1);
  BasicTensor<T> out(Shape{R, A + B});
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t j = 0; j < A; ++j) out(r, j) = av(r, j);
    for (std::size_t j = 0; j < B; ++j) out(r, A + j) = bv(r, j);
  }
  return a.tape->record(out, {a, b}, [a, b, R, A, B](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> da(Shape{R, A}), db(Shape{R, B});
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t j = 0; j < A; ++j) da(r, j) = g(r, j);
      for (std::size_t j = 0; j < B; ++j) db(r, j) = g(r, A + j);
    }
    tp.accumulate(a, da);
    tp.accumulate(b, db);
  });
}

// Columns [begin, end) of a 2-D value.
template <class T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& av = a.value();
  if (av.rank() != 2 || begin >= end || end > av.dim(1))
    throw ShapeError("slice_cols: invalid column range");
  const std::size_t R = av.dim(0), N = av.dim(1), L = end - begin;
  BasicTensor<T> out(Shape{R, L});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < L; ++j) out(r, j) = av(r, begin + j);
  return a.tape->record(out, {a}, [a, R, N, L, begin](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> d(Shape{R, N});
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t j = 0; j < L; ++j) d(r, begin + j) = g(r, j);
    tp.accumulate(a, d);
  });
}

// out[c,h,w] = x[c,h,w] * gh[c,h] * gw[c,w]
template <class T>
Var<T> directional_gate(Var<T> x, Var<T> gh, Var<T> gw) {
  const auto& xv = x.value();
  const auto& hv = gh.value();
  const auto& wv = gw.value();
  if (xv.rank() != 3) throw ShapeError("directional_gate: expected C x H x W");
  const std::size_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  if (hv.shape() != Shape{C, H} || wv.shape() != Shape{C, W})
    throw ShapeError("directional_gate: gate shapes do not match input");
  BasicTensor<T> out(xv.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) out(c, h, w) = xv(c, h, w) * hv(c, h) * wv(c, w);
  return x.tape->record(out, {x, gh, gw}, [x, gh, gw, C, H, W](Tape<T>& tp, const BasicTensor<T>& g) {
    const auto& xv = x.value();
    const auto& hv = gh.value();
    const auto& wv = gw.value();
    BasicTensor<T> dx(Shape{C, H, W}), dh(Shape{C, H}), dw(Shape{C, W});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
          const T gi = g(c, h, w);
          dx(c, h, w) = gi * hv(c, h) * wv(c, w);
          dh(c, h) += gi * xv(c, h, w) * wv(c, w);
          dw(c, w) += gi * xv(c, h, w) * hv(c, h);
        }
    tp.accumulate(x, dx);
    tp.accumulate(gh, dh);
    tp.accumulate(gw, dw);
  });
}

// out[c, ...] = x[c, ...] * g[c]
template <class T>
Var<T> channel_scale(Var<T> x, Var<T> gate) {
  const auto& xv = x.value();
  const std::size_t C = xv.dim(0);
  if (gate.value().size() != C) throw ShapeError("channel_scale: gate length mismatch");
  const std::size_t P = xv.size() / C;
  BasicTensor<T> out(xv.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p) out[c * P + p] = xv[c * P + p] * gate.value()[c];
  return x.tape->record(out, {x, gate}, [x, gate, C, P](Tape<T>& tp, const BasicTensor<T>& g) {
    const auto& xv = x.value();
    const auto& gv = gate.value();
    BasicTensor<T> dx(xv.shape()), dg(gv.shape());
    for (std::size_t c = 0; c < C; ++c) {
      accum_t<T> acc = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        dx[c * P + p] = g[c * P + p] * gv[c];
        acc += static_cast<accum_t<T>>(g[c * P + p]) * xv[c * P + p];
      }
      dg[c] = static_cast<T>(acc);
    }
    tp.accumulate(x, dx);
    tp.accumulate(gate, dg);
  });
}

// out[c] = sum over positions of x[c, ...] * basis[c, ...]; basis is fixed.
template <class T>
Var<T> project_channels(Var<T> x, const BasicTensor<T>& basis) {
  const auto& xv = x.value();
  if (xv.shape() != basis.shape()) throw ShapeError("project_channels: basis shape mismatch");
  const std::size_t C = xv.dim(0);
  const std::size_t P = xv.size() / C;
  BasicTensor<T> out(Shape{C});
  for (std::size_t c = 0; c < C; ++c) {
    accum_t<T> acc = 0.0;
    for (std::size_t p = 0; p < P; ++p)
      acc += static_cast<accum_t<T>>(xv[c * P + p]) * static_cast<accum_t<T>>(basis[c * P + p]);
    out[c] = static_cast<T>(acc);
  }
  return x.tape->record(out, {x}, [x, basis, C, P](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> d(x.shape());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) d[c * P + p] = g[c] * basis[c * P + p];
    tp.accumulate(x, d);
  });
}

// Token-FC. z is C x (m*s) with token r owning columns [r*s, (r+1)*s);
// out[c, j*s + t] = sum_r weight[j, r] * z[c, r*s + t].
template <class T>
Var<T> token_mix(Var<T> z, Var<T> weight) {
  const auto& zv = z.value();
  const auto& wv = weight.value();
  if (zv.rank() != 2 || wv.rank() != 2 || wv.dim(0) != wv.dim(1))
    throw ShapeError("token_mix: expected C x (m*s) values and m x m weights");
  const std::size_t C = zv.dim(0), m = wv.dim(0);
  if (zv.dim(1) % m != 0) throw ShapeError("token_mix: slot count not divisible by token count");
  const std::size_t s = zv.dim(1) / m;
  BasicTensor<T> out(zv.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < s; ++t) {
        accum_t<T> acc = 0.0;
        for (std::size_t r = 0; r < m; ++r)
          acc += static_cast<accum_t<T>>(wv(j, r)) * static_cast<accum_t<T>>(zv(c, r * s + t));
        out(c, j * s + t) = static_cast<T>(acc);
      }
  return z.tape->record(out, {z, weight}, [z, weight, C, m, s](Tape<T>& tp, const BasicTensor<T>& g) {
    const auto& zv = z.value();
    const auto& wv = weight.value();
    if (tp.requires_grad(z)) {
      BasicTensor<T> dz(zv.shape());
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t t = 0; t < s; ++t) {
            accum_t<T> acc = 0.0;
            for (std::size_t j = 0; j < m; ++j)
              acc += static_cast<accum_t<T>>(wv(j, r)) * static_cast<accum_t<T>>(g(c, j * s + t));
            dz(c, r * s + t) = static_cast<T>(acc);
          }
      tp.accumulate(z, dz);
    }
    if (tp.requires_grad(weight)) {
      BasicTensor<T> dw(wv.shape());
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t r = 0; r < m; ++r) {
          accum_t<T> acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < s; ++t)
              acc += static_cast<accum_t<T>>(g(c, j * s + t)) * static_cast<accum_t<T>>(zv(c, r * s + t));
          dw(j, r) = static_cast<T>(acc);
        }
      tp.accumulate(weight, dw);
    }
  });
}

// C x ... -> [C], mean over all trailing positions.
template <class T>
Var<T> mean_positions(Var<T> x) {
  const auto& xv = x.value();
  const std::size_t C = xv.dim(0);
  const std::size_t P = xv.size() / C;
  BasicTensor<T> out(Shape{C});
  for (std::size_t c = 0; c < C; ++c) {
    accum_t<T> acc = 0.0;
    for (std::size_t p = 0; p < P; ++p) acc += xv[c * P + p];
    out[c] = static_cast<T>(acc / static_cast<accum_t<T>>(P));
  }
  return x.tape->record(out, {x}, [x, C, P](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> d(x.shape());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) d[c * P + p] = g[c] / static_cast<T>(P);
    tp.accumulate(x, d);
  });
}

// Inner product of two equal-length vectors -> [1].
template <class T>
Var<T> dot(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.size() != bv.size()) throw ShapeError("dot: length mismatch");
  accum_t<T> acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += static_cast<accum_t<T>>(av[i]) * bv[i];
  return a.tape->record(BasicTensor<T>::scalar(static_cast<T>(acc)), {a, b},
                        [a, b](Tape<T>& tp, const BasicTensor<T>& g) {
                          if (tp.requires_grad(a)) tp.accumulate(a, ops::mul(b.value(), g[0]));
                          if (tp.requires_grad(b)) tp.accumulate(b, ops::mul(a.value(), g[0]));
                        });
}

// Non-overlapping factor x factor average pooling of C x H x W.
template <class T>
Var<T> avg_pool(Var<T> x, std::size_t factor) {
  const auto& xv = x.value();
  if (xv.rank() != 3 || factor == 0 || xv.dim(1) % factor || xv.dim(2) % factor)
    throw ShapeError("avg_pool: spatial extents must be divisible by the pooling factor");
  const std::size_t C = xv.dim(0), H = xv.dim(1) / factor, W = xv.dim(2) / factor;
  const accum_t<T> inv = 1.0 / static_cast<accum_t<T>>(factor * factor);
  BasicTensor<T> out(Shape{C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        accum_t<T> acc = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx) acc += xv(c, h * factor + dy, w * factor + dx);
        out(c, h, w) = static_cast<T>(acc * inv);
      }
  return x.tape->record(out, {x}, [x, factor, C, H, W, inv](Tape<T>& tp, const BasicTensor<T>& g) {
    BasicTensor<T> d(x.shape());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          for (std::size_t dy = 0; dy < factor; ++dy)
            for (std::size_t dx = 0; dx < factor; ++dx)
              d(c, h * factor + dy, w * factor + dx) = static_cast<T>(g(c, h, w) * inv);
    tp.accumulate(x, d);
  });
}

}  // namespace ag
}  // namespace d2f
