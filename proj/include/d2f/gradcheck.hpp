#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "d2f/autodiff.hpp"

namespace d2f {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

namespace detail {

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

// Central difference over the step actually representable in T, which
// removes the rounding of x +/- eps from the quotient. `eval` returns the
// function value in accum_t<T>.
template <class T, class Eval>
double central_difference(T& slot, double eps, std::size_t index, Eval&& eval) {
  using A = accum_t<T>;
  const T original = slot;
  const T plus = static_cast<T>(static_cast<A>(original) + static_cast<A>(eps));
  const T minus = static_cast<T>(static_cast<A>(original) - static_cast<A>(eps));
  slot = plus;
  const A fp = eval();
  slot = minus;
  const A fm = eval();
  slot = original;
  if (!std::isfinite(fp) || !std::isfinite(fm)) {
    throw EvaluationError("gradient_check: non-finite function value at perturbed point", index);
  }
  return static_cast<double>((fp - fm) / (static_cast<A>(plus) - static_cast<A>(minus)));
}

inline void update(GradCheckReport& r, std::size_t i, double a, double n) {
  const double e = relative_error(a, n);
  if (i == 0 || e > r.max_relative_error) {
    r.max_relative_error = e;
    r.worst_index = i;
    r.analytic = a;
    r.numeric = n;
  }
}

}  // namespace detail

// Scalar function of one recorded input.
template <class T>
using TapeFunction = std::function<Var<T>(Tape<T>&, Var<T>)>;

// Compares the reverse-mode gradient of f at x with central differences.
template <class T>
GradCheckReport gradient_check(const TapeFunction<T>& f, const BasicTensor<T>& x, double eps = 1e-3) {
  if (!(eps > 0.0)) throw DomainError("gradient_check: eps must be positive");
  Tape<T> tape;
  auto in = tape.input(x);
  auto out = f(tape, in);
  tape.backward(out);
  const auto analytic = tape.grad(in);

  BasicTensor<T> probe = x;
  auto eval = [&] {
    Tape<T> t;
    return static_cast<accum_t<T>>(f(t, t.constant(probe)).value().item());
  };
  GradCheckReport report;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double n = detail::central_difference(probe[i], eps, i, eval);
    detail::update(report, i, static_cast<double>(analytic[i]), n);
  }
  return report;
}

struct NamedGradCheck {
  std::string name;
  GradCheckReport report;
};

// Checks d loss / d p for every parameter. `loss` must watch the
// parameters it reads through tape.watch().
template <class T>
std::vector<NamedGradCheck> check_parameters(const std::vector<Parameter<T>*>& params,
                                             const std::function<Var<T>(Tape<T>&)>& loss,
                                             double eps = 1e-3) {
  zero_grad(params);
  {
    Tape<T> tape;
    tape.backward(loss(tape));
  }
  auto eval = [&] {
    Tape<T> t;
    return static_cast<accum_t<T>>(loss(t).value().item());
  };
  std::vector<NamedGradCheck> out;
  for (auto* p : params) {
    GradCheckReport report;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double n = detail::central_difference(p->value[i], eps, i, eval);
      detail::update(report, i, static_cast<double>(p->gradient[i]), n);
    }
    out.push_back({p->name, report});
  }
  zero_grad(params);
  return out;
}

inline double worst_error(const std::vector<NamedGradCheck>& checks) {
  double m = 0.0;
  for (const auto& c : checks) m = std::max(m, c.report.max_relative_error);
  return m;
}

}  // namespace d2f
