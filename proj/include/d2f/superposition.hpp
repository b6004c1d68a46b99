#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "d2f/autodiff.hpp"

// Wave-token feature superposition. Spatial positions are cut into m
// contiguous tokens; each token gets an amplitude |Wc x| and a phase Wq x,
// tokens are mixed through the real and imaginary parts of the wave, and a
// final channel map produces the output.
namespace d2f {

template <class T>
struct WaveParams {
  std::size_t tokens = 16;
  Parameter<T> amplitude_fc;  // C x C
  Parameter<T> phase_fc;      // C x C
  Parameter<T> real_mix;      // m x m
  Parameter<T> imag_mix;      // m x m
  Parameter<T> output_fc;     // C x C

  static WaveParams init(std::size_t channels, std::size_t tokens, Rng& rng) {
    if (tokens == 0) throw ConfigError("superposition: token count must be positive");
    const double bc = 1.0 / std::sqrt(static_cast<double>(channels));
    const double bm = 1.0 / std::sqrt(static_cast<double>(tokens));
    WaveParams p;
    p.tokens = tokens;
    p.amplitude_fc = {"wave.amplitude_fc", BasicTensor<T>::uniform({channels, channels}, rng, -bc, bc)};
    p.phase_fc = {"wave.phase_fc", BasicTensor<T>::uniform({channels, channels}, rng, -bc, bc)};
    p.real_mix = {"wave.real_mix", BasicTensor<T>::uniform({tokens, tokens}, rng, -bm, bm)};
    p.imag_mix = {"wave.imag_mix", BasicTensor<T>::uniform({tokens, tokens}, rng, -bm, bm)};
    p.output_fc = {"wave.output_fc", BasicTensor<T>::uniform({channels, channels}, rng, -bc, bc)};
    return p;
  }

  std::vector<Parameter<T>*> parameters() {
    return {&amplitude_fc, &phase_fc, &real_mix, &imag_mix, &output_fc};
  }
};

// Per-token amplitude and phase, both m x C x s.
template <class T>
struct WaveTokens {
  BasicTensor<T> amplitude;
  BasicTensor<T> phase;
};

// Token j holds slots [j*s, (j+1)*s) of the row-major flattened H x W plane.
template <class T>
std::vector<BasicTensor<T>> split_tokens(const BasicTensor<T>& x, std::size_t m) {
  if (x.rank() != 3) throw ShapeError("split_tokens: expected C x H x W");
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  if (m == 0 || HW % m != 0)
    throw ConfigError("split_tokens: " + std::to_string(HW) + " positions not divisible by " +
                      std::to_string(m) + " tokens");
  const std::size_t s = HW / m;
  std::vector<BasicTensor<T>> tokens(m, BasicTensor<T>(Shape{C, s}));
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < s; ++t) tokens[j](c, t) = x[c * HW + j * s + t];
  return tokens;
}

template <class T>
BasicTensor<T> merge_tokens(const std::vector<BasicTensor<T>>& tokens, std::size_t H, std::size_t W) {
  if (tokens.empty()) throw ShapeError("merge_tokens: no tokens");
  const std::size_t m = tokens.size(), C = tokens[0].dim(0), s = tokens[0].dim(1);
  if (m * s != H * W) throw ShapeError("merge_tokens: token geometry does not cover H x W");
  BasicTensor<T> x(Shape{C, H, W});
  for (std::size_t j = 0; j < m; ++j) {
    if (tokens[j].shape() != Shape{C, s}) throw ShapeError("merge_tokens: ragged tokens");
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < s; ++t) x[c * H * W + j * s + t] = tokens[j](c, t);
  }
  return x;
}

namespace detail {

template <class T>
void require_channel_map(const BasicTensor<T>& token, const BasicTensor<T>& weight, const char* op) {
  if (token.rank() != 2 || weight.shape() != Shape{token.dim(0), token.dim(0)})
    throw ShapeError(std::string(op) + ": expected a C x s token and a C x C weight, got " +
                     shape_string(token.shape()) + " and " + shape_string(weight.shape()));
}

}  // namespace detail

template <class T>
BasicTensor<T> amplitude(const BasicTensor<T>& token, const BasicTensor<T>& weight) {
  detail::require_channel_map(token, weight, "amplitude");
  return ops::abs(ops::conv1x1(token, weight));
}

template <class T>
BasicTensor<T> phase(const BasicTensor<T>& token, const BasicTensor<T>& weight) {
  detail::require_channel_map(token, weight, "phase");
  return ops::conv1x1(token, weight);
}

// Amplitude of the sum of two waves:
// sqrt(a_k^2 + a_j^2 + 2 a_k a_j cos(theta_j - theta_k)).
template <class T>
T superpose_pair(T amp_k, T theta_k, T amp_j, T theta_j) {
  const double ak = amp_k, aj = amp_j;
  const double r = ak * ak + aj * aj + 2.0 * ak * aj * std::cos(static_cast<double>(theta_j) - theta_k);
  return static_cast<T>(std::sqrt(std::max(0.0, r)));
}

template <class T>
BasicTensor<T> superpose_pair(const BasicTensor<T>& amp_k, const BasicTensor<T>& theta_k,
                              const BasicTensor<T>& amp_j, const BasicTensor<T>& theta_j) {
  if (amp_k.shape() != theta_k.shape() || amp_k.shape() != amp_j.shape() || amp_k.shape() != theta_j.shape())
    throw ShapeError("superpose_pair: operand shapes differ");
  BasicTensor<T> out(amp_k.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (amp_k[i] < T{0} || amp_j[i] < T{0}) throw DomainError("superpose_pair: negative amplitude");
    out[i] = superpose_pair(amp_k[i], theta_k[i], amp_j[i], theta_j[i]);
  }
  return out;
}

// o[j] = sum_r real_mix[j,r] a_r cos(theta_r) + imag_mix[j,r] a_r sin(theta_r)
template <class T>
BasicTensor<T> token_fuse(const WaveTokens<T>& waves, const BasicTensor<T>& real_mix,
                          const BasicTensor<T>& imag_mix) {
  const auto& a = waves.amplitude;
  const auto& th = waves.phase;
  if (a.rank() != 3 || a.shape() != th.shape()) throw ShapeError("token_fuse: wave arrays must be m x C x s");
  const std::size_t m = a.dim(0), cs = a.dim(1) * a.dim(2);
  if (real_mix.shape() != Shape{m, m} || imag_mix.shape() != Shape{m, m})
    throw ShapeError("token_fuse: mixing weights must be " + std::to_string(m) + "x" + std::to_string(m));
  BasicTensor<T> out(a.shape());
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < cs; ++k) {
      double acc = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        const double amp = a[r * cs + k], ph = th[r * cs + k];
        acc += real_mix(j, r) * amp * std::cos(ph) + imag_mix(j, r) * amp * std::sin(ph);
      }
      out[j * cs + k] = static_cast<T>(acc);
    }
  return out;
}

// Amplitude and phase of every token of x, stacked m x C x s.
template <class T>
WaveTokens<T> make_waves(const BasicTensor<T>& x, const WaveParams<T>& p) {
  const auto tokens = split_tokens(x, p.tokens);
  const std::size_t m = tokens.size(), C = tokens[0].dim(0), s = tokens[0].dim(1);
  WaveTokens<T> w{BasicTensor<T>(Shape{m, C, s}), BasicTensor<T>(Shape{m, C, s})};
  for (std::size_t j = 0; j < m; ++j) {
    const auto a = amplitude(tokens[j], p.amplitude_fc.value);
    const auto th = phase(tokens[j], p.phase_fc.value);
    std::copy(a.values().begin(), a.values().end(), w.amplitude.data() + j * C * s);
    std::copy(th.values().begin(), th.values().end(), w.phase.data() + j * C * s);
  }
  return w;
}

template <class T>
Var<T> superposition_forward(Tape<T>& tape, Var<T> x, WaveParams<T>& p) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("superposition: expected C x H x W input");
  const std::size_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  if (p.tokens == 0 || (H * W) % p.tokens != 0)
    throw ConfigError("superposition: " + std::to_string(H * W) + " positions not divisible by " +
                      std::to_string(p.tokens) + " tokens");
  if (p.amplitude_fc.value.shape() != Shape{C, C} || p.phase_fc.value.shape() != Shape{C, C} ||
      p.output_fc.value.shape() != Shape{C, C})
    throw ShapeError("superposition: channel weights do not match " + std::to_string(C) + " channels");
  // The C x HW layout already places token r in columns [r*s, (r+1)*s).
  auto flat = ag::reshape(x, Shape{C, H * W});
  auto amp = ag::abs(ag::conv1x1(flat, tape.watch(p.amplitude_fc)));
  auto theta = ag::conv1x1(flat, tape.watch(p.phase_fc));
  auto re = ag::mul(amp, ag::cos(theta));
  auto im = ag::mul(amp, ag::sin(theta));
  auto fused = ag::add(ag::token_mix(re, tape.watch(p.real_mix)), ag::token_mix(im, tape.watch(p.imag_mix)));
  auto out = ag::conv1x1(fused, tape.watch(p.output_fc));
  return ag::reshape(out, Shape{C, H, W});
}

template <class T>
BasicTensor<T> superposition_forward(const BasicTensor<T>& x, WaveParams<T>& p) {
  Tape<T> tape;
  return superposition_forward(tape, tape.constant(x), p).value();
}

}  // namespace d2f
