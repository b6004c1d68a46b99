#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "d2f/autodiff.hpp"

// Fine-grained spectral attention: channels are split into groups, each
// group is projected onto one 2-D cosine basis, and the resulting band is
// passed through a sigmoid excitation that rescales the channels.
namespace d2f {

enum class BasisVariant {
  paper_literal,  // cos(pi h / H (u + 1/2)) cos(pi w / W (v + 1/2))
  dct2_standard,  // cos(pi (h + 1/2) u / H) cos(pi (w + 1/2) v / W)
};

using FrequencyIndex = std::pair<std::size_t, std::size_t>;

inline double dct_basis_value(std::size_t h, std::size_t w, std::size_t H, std::size_t W, std::size_t u,
                              std::size_t v, BasisVariant variant) {
  constexpr double pi = std::numbers::pi;
  const double dh = static_cast<double>(h), dw = static_cast<double>(w);
  const double du = static_cast<double>(u), dv = static_cast<double>(v);
  if (variant == BasisVariant::paper_literal)
    return std::cos(pi * dh / static_cast<double>(H) * (du + 0.5)) *
           std::cos(pi * dw / static_cast<double>(W) * (dv + 0.5));
  return std::cos(pi * (dh + 0.5) * du / static_cast<double>(H)) *
         std::cos(pi * (dw + 0.5) * dv / static_cast<double>(W));
}

// H x W basis for frequency (u, v).
template <class T = float>
BasicTensor<T> dct_basis(std::size_t H, std::size_t W, std::size_t u, std::size_t v, BasisVariant variant) {
  if (H == 0 || W == 0) throw ShapeError("dct_basis: extents must be positive");
  if (u >= H || v >= W)
    throw DomainError("dct_basis: frequency (" + std::to_string(u) + "," + std::to_string(v) +
                      ") out of range for " + std::to_string(H) + "x" + std::to_string(W));
  BasicTensor<T> b(Shape{H, W});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w) b(h, w) = static_cast<T>(dct_basis_value(h, w, H, W, u, v, variant));
  return b;
}

// First n indices of the zigzag scan over an 8 x 8 frequency grid, scaled
// to an H x W map.
inline std::vector<FrequencyIndex> zigzag_frequencies(std::size_t n, std::size_t H, std::size_t W) {
  constexpr std::size_t grid = 8;
  if (n == 0 || n > grid * grid) throw ConfigError("spectral: group count must be in [1, 64]");
  std::vector<FrequencyIndex> scan;
  for (std::size_t d = 0; d < 2 * grid - 1; ++d) {
    for (std::size_t i = 0; i <= d; ++i) {
      const std::size_t u = d % 2 == 1 ? i : d - i;
      const std::size_t v = d - u;
      if (u < grid && v < grid) scan.emplace_back(u, v);
    }
  }
  scan.resize(n);
  for (auto& [u, v] : scan) {
    u = u * H / grid;
    v = v * W / grid;
  }
  return scan;
}


inline std::string basis_variant_name(BasisVariant v) {
  return v == BasisVariant::paper_literal ? "paper-literal" : "dct2-standard";
}

inline BasisVariant parse_basis_variant(const std::string& s) {
  if (s == "paper-literal" || s == "paper_literal") return BasisVariant::paper_literal;
  if (s == "dct2-standard" || s == "dct2_standard") return BasisVariant::dct2_standard;
  throw ConfigError("unknown basis variant '" + s + "'");
}

// Expanded C x H x W projection tensors, keyed by geometry and frequency
// list. Readers share the lock; a miss upgrades to an exclusive insert.
class BasisCache {
 public:
  static BasisCache& shared() {
    static BasisCache cache;
    return cache;
  }

  std::shared_ptr<const BasicTensor<double>> channel_basis(std::size_t C, std::size_t H, std::size_t W,
                                                           const std::vector<FrequencyIndex>& freqs,
                                                           BasisVariant variant) {
    Key key{C, H, W, freqs, variant};
    {
      std::shared_lock lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    auto built = std::make_shared<const BasicTensor<double>>(build(C, H, W, freqs, variant));
    std::unique_lock lock(mutex_);
    return entries_.emplace(std::move(key), std::move(built)).first->second;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

 private:
  using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::vector<FrequencyIndex>, BasisVariant>;

  static BasicTensor<double> build(std::size_t C, std::size_t H, std::size_t W,
                                   const std::vector<FrequencyIndex>& freqs, BasisVariant variant) {
    const std::size_t n = freqs.size();
    if (n == 0 || C % n != 0)
      throw ConfigError("spectral: channel count " + std::to_string(C) + " not divisible by " +
                        std::to_string(n) + " groups");
    const std::size_t group = C / n;
    BasicTensor<double> out(Shape{C, H, W});
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = dct_basis<double>(H, W, freqs[i].first, freqs[i].second, variant);
      for (std::size_t c = i * group; c < (i + 1) * group; ++c)
        for (std::size_t k = 0; k < H * W; ++k) out[c * H * W + k] = b[k];
    }
    return out;
  }

  mutable std::shared_mutex mutex_;
  std::map<Key, std::shared_ptr<const BasicTensor<double>>> entries_;
};

template <class T>
struct SpectralParams {
  std::size_t channels = 0;
  std::vector<FrequencyIndex> freqs;  // one per channel group, group order
  BasisVariant variant = BasisVariant::paper_literal;
  std::size_t excite_reduction = 4;
  Parameter<T> excite_in;        // (C/r_e) x C
  Parameter<T> excite_in_bias;   // C/r_e
  Parameter<T> excite_out;       // C x (C/r_e)
  Parameter<T> excite_out_bias;  // C

  std::size_t groups() const { return freqs.size(); }

  static SpectralParams init(std::size_t channels, std::vector<FrequencyIndex> freqs, BasisVariant variant,
                             std::size_t excite_reduction, Rng& rng) {
    if (freqs.empty() || channels % freqs.size() != 0)
      throw ConfigError("spectral: channel count " + std::to_string(channels) + " not divisible by " +
                        std::to_string(freqs.size()) + " groups");
    if (excite_reduction == 0 || channels % excite_reduction != 0)
      throw ConfigError("spectral: channel count not divisible by excitation reduction");
    const std::size_t mid = channels / excite_reduction;
    const double b_in = 1.0 / std::sqrt(static_cast<double>(channels));
    const double b_mid = 1.0 / std::sqrt(static_cast<double>(mid));
    SpectralParams p;
    p.channels = channels;
    p.freqs = std::move(freqs);
    p.variant = variant;
    p.excite_reduction = excite_reduction;
    p.excite_in = {"spectral.excite_in", BasicTensor<T>::uniform({mid, channels}, rng, -b_in, b_in)};
    p.excite_in_bias = {"spectral.excite_in_bias", BasicTensor<T>(Shape{mid})};
    p.excite_out = {"spectral.excite_out", BasicTensor<T>::uniform({channels, mid}, rng, -b_mid, b_mid)};
    p.excite_out_bias = {"spectral.excite_out_bias", BasicTensor<T>(Shape{channels})};
    return p;
  }

  std::vector<Parameter<T>*> parameters() {
    return {&excite_in, &excite_in_bias, &excite_out, &excite_out_bias};
  }

  BasicTensor<T> basis(std::size_t H, std::size_t W) const {
    if (freqs.empty() || channels % freqs.size() != 0)
      throw ConfigError("spectral: channel count not divisible by group count");
    for (const auto& [u, v] : freqs)
      if (u >= H || v >= W)
        throw ConfigError("spectral: frequency (" + std::to_string(u) + "," + std::to_string(v) +
                          ") out of range for " + std::to_string(H) + "x" + std::to_string(W) + " features");
    auto b = BasisCache::shared().channel_basis(channels, H, W, freqs, variant);
    return b->template cast<T>();
  }
};

// kappa[c] = sum_{h,w} x[c,h,w] * B^{u_i,v_i}[h,w] for the group i holding c.
template <class T>
Var<T> spectral_squeeze(Tape<T>&, Var<T> x, const SpectralParams<T>& p) {
  const auto& xv = x.value();
  if (xv.rank() != 3 || xv.dim(0) != p.channels)
    throw ShapeError("spectral: input " + shape_string(xv.shape()) + " does not match " +
                     std::to_string(p.channels) + " channels");
  return ag::project_channels(x, p.basis(xv.dim(1), xv.dim(2)));
}

template <class T>
Var<T> excite(Tape<T>& tape, Var<T> kappa, SpectralParams<T>& p) {
  if (kappa.value().rank() != 1 || kappa.value().size() != p.channels)
    throw ShapeError("excite: band length does not match channel count");
  auto hidden = ag::relu(ag::conv1x1(kappa, tape.watch(p.excite_in), tape.watch(p.excite_in_bias)));
  return ag::sigmoid(ag::conv1x1(hidden, tape.watch(p.excite_out), tape.watch(p.excite_out_bias)));
}

template <class T>
struct SpectralVars {
  Var<T> out, kappa, gate;
};

template <class T>
SpectralVars<T> spectral_forward(Tape<T>& tape, Var<T> x, SpectralParams<T>& p) {
  SpectralVars<T> v;
  v.kappa = spectral_squeeze(tape, x, p);
  v.gate = excite(tape, v.kappa, p);
  v.out = ag::channel_scale(x, v.gate);
  return v;
}

// Value-level entry points.

template <class T>
BasicTensor<T> spectral_squeeze(const BasicTensor<T>& x, const SpectralParams<T>& p) {
  Tape<T> tape;
  return spectral_squeeze(tape, tape.constant(x), p).value();
}

template <class T>
BasicTensor<T> excite(const BasicTensor<T>& kappa, SpectralParams<T>& p) {
  Tape<T> tape;
  return excite(tape, tape.constant(kappa), p).value();
}

// x[c, ...] * gate[c]
template <class T>
BasicTensor<T> apply_channel_gate(const BasicTensor<T>& x, const BasicTensor<T>& gate) {
  Tape<T> tape;
  return ag::channel_scale(tape.constant(x), tape.constant(gate)).value();
}

template <class T>
BasicTensor<T> spectral_forward(const BasicTensor<T>& x, SpectralParams<T>& p) {
  Tape<T> tape;
  return spectral_forward(tape, tape.constant(x), p).out.value();
}

}  // namespace d2f
