#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "d2f/random.hpp"
#include "d2f/tensor.hpp"

namespace d2f {

// H x W x channels, interleaved, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {
    validate();
  }
  Image(std::size_t h, std::size_t w, std::size_t c, std::vector<float> px)
      : height(h), width(w), channels(c), pixels(std::move(px)) {
    validate();
  }

  float& at(std::size_t y, std::size_t x, std::size_t ch = 0) {
    return pixels[(y * width + x) * channels + ch];
  }
  float at(std::size_t y, std::size_t x, std::size_t ch = 0) const {
    return pixels[(y * width + x) * channels + ch];
  }

  void validate() const {
    if (height == 0 || width == 0) throw ShapeError("image extents must be positive");
    if (channels != 1 && channels != 3) throw ShapeError("image must have 1 or 3 channels");
    if (pixels.size() != height * width * channels) throw ShapeError("image pixel count mismatch");
    for (float v : pixels)
      if (!(v >= 0.0f && v <= 1.0f)) throw DomainError("image pixel outside [0,1]");
  }

  // channels x H x W planar tensor.
  Tensor to_tensor() const {
    Tensor t(Shape{channels, height, width});
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        for (std::size_t c = 0; c < channels; ++c) t(c, y, x) = at(y, x, c);
    return t;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Single-channel blend weights in [0, 1].
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

// Top-left (x_t column, y_t row) plus extents; always inside its image.
struct WindowSpec {
  std::size_t x_t = 0;
  std::size_t y_t = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct SsimConstants {
  double L = 1.0;
  double C1 = 0.0001;    // (0.01 L)^2
  double C2 = 0.0009;    // (0.03 L)^2
  double C3 = 0.00045;   // C2 / 2
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  int k = 7;

  static SsimConstants for_range(double L) {
    SsimConstants c;
    c.L = L;
    c.C1 = (0.01 * L) * (0.01 * L);
    c.C2 = (0.03 * L) * (0.03 * L);
    c.C3 = c.C2 / 2.0;
    return c;
  }

  void validate() const {
    if (!(C1 > 0 && C2 > 0 && C3 > 0)) throw ConfigError("SSIM stabilizers must be positive");
    if (k < 3 || k % 2 == 0) throw ConfigError("SSIM window size must be odd and at least 3");
  }
};

// Per-pixel comparison maps and the local statistics behind them, all H x W.
struct SsimMaps {
  Tensor l, c, s;
  Tensor mu_f, mu_s, sd_f, sd_s, cov;
};

enum class DssimMode { standard, paper_literal };

inline constexpr double kDssimEpsilon = 1e-6;

namespace detail {

inline std::vector<double> luma(const Image& img) {
  std::vector<double> out(img.height * img.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (img.channels == 1) {
      out[i] = img.pixels[i];
    } else {
      const float* p = &img.pixels[i * 3];
      out[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

// Mean over a k x k window centred on each pixel, borders replicated.
inline std::vector<double> box_mean(const std::vector<double>& src, std::size_t H, std::size_t W, int k) {
  const std::size_t r = static_cast<std::size_t>(k / 2);
  const std::size_t PH = H + 2 * r, PW = W + 2 * r;
  // Summed-area table over the replicated-border padding.
  std::vector<double> sat((PH + 1) * (PW + 1), 0.0);
  for (std::size_t y = 0; y < PH; ++y) {
    const std::size_t sy = std::min(H - 1, y < r ? 0 : y - r);
    double row = 0.0;
    for (std::size_t x = 0; x < PW; ++x) {
      const std::size_t sx = std::min(W - 1, x < r ? 0 : x - r);
      row += src[sy * W + sx];
      sat[(y + 1) * (PW + 1) + (x + 1)] = sat[y * (PW + 1) + (x + 1)] + row;
    }
  }
  const double inv = 1.0 / static_cast<double>(k * k);
  const std::size_t kk = static_cast<std::size_t>(k);
  std::vector<double> out(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double s = sat[(y + kk) * (PW + 1) + (x + kk)] - sat[y * (PW + 1) + (x + kk)] -
                       sat[(y + kk) * (PW + 1) + x] + sat[y * (PW + 1) + x];
      out[y * W + x] = s * inv;
    }
  return out;
}

inline void require_same_extents(const Image& a, const Image& b, const char* op) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ShapeError(std::string(op) + ": image extents or channel counts differ");
}

}  // namespace detail

inline SsimMaps ssim_maps(const Image& fake, const Image& source, const SsimConstants& k) {
  detail::require_same_extents(fake, source, "ssim_maps");
  k.validate();
  const std::size_t H = fake.height, W = fake.width;
  const auto a = detail::luma(fake);
  const auto b = detail::luma(source);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto ma = detail::box_mean(a, H, W, k.k);
  const auto mb = detail::box_mean(b, H, W, k.k);
  const auto maa = detail::box_mean(aa, H, W, k.k);
  const auto mbb = detail::box_mean(bb, H, W, k.k);
  const auto mab = detail::box_mean(ab, H, W, k.k);

  SsimMaps m{Tensor(Shape{H, W}), Tensor(Shape{H, W}), Tensor(Shape{H, W}),
             Tensor(Shape{H, W}), Tensor(Shape{H, W}), Tensor(Shape{H, W}),
             Tensor(Shape{H, W}), Tensor(Shape{H, W})};
  for (std::size_t i = 0; i < H * W; ++i) {
    const double va = std::max(0.0, maa[i] - ma[i] * ma[i]);
    const double vb = std::max(0.0, mbb[i] - mb[i] * mb[i]);
    const double sa = std::sqrt(va), sb = std::sqrt(vb);
    const double cov = mab[i] - ma[i] * mb[i];
    m.l[i] = static_cast<float>((2 * ma[i] * mb[i] + k.C1) / (ma[i] * ma[i] + mb[i] * mb[i] + k.C1));
    m.c[i] = static_cast<float>((2 * sa * sb + k.C2) / (va + vb + k.C2));
    m.s[i] = static_cast<float>((cov + k.C3) / (sa * sb + k.C3));
    m.mu_f[i] = static_cast<float>(ma[i]);
    m.mu_s[i] = static_cast<float>(mb[i]);
    m.sd_f[i] = static_cast<float>(sa);
    m.sd_s[i] = static_cast<float>(sb);
    m.cov[i] = static_cast<float>(cov);
  }
  return m;
}

// Per-pixel dissimilarity. Standard mode is (1 - S) / 2, which grows with
// dissimilarity; paper-literal mode is 1 / max(1 - S, eps).
inline Tensor dssim_map(const Image& fake, const Image& source, const SsimConstants& k,
                        DssimMode mode = DssimMode::standard) {
  const auto m = ssim_maps(fake, source, k);
  Tensor out(m.l.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Signed power keeps S defined for negative structure terms with
    // non-integer exponents.
    auto spow = [](double v, double e) {
      return e == 1.0 ? v : std::copysign(std::pow(std::abs(v), e), v);
    };
    const double S = spow(m.l[i], k.alpha) * spow(m.c[i], k.beta) * spow(m.s[i], k.gamma);
    out[i] = mode == DssimMode::standard
                 ? static_cast<float>((1.0 - S) / 2.0)
                 : static_cast<float>(1.0 / std::max(1.0 - S, kDssimEpsilon));
  }
  return out;
}

// Prefix-sum table with one row and column of zero padding.
class SummedAreaTable {
 public:
  explicit SummedAreaTable(const Tensor& map) : H_(rows_of(map)), W_(map.dim(1)) {
    table_.assign((H_ + 1) * (W_ + 1), 0.0);
    for (std::size_t y = 0; y < H_; ++y) {
      double row = 0.0;
      for (std::size_t x = 0; x < W_; ++x) {
        row += static_cast<double>(map(y, x));
        table_[(y + 1) * (W_ + 1) + x + 1] = table_[y * (W_ + 1) + x + 1] + row;
      }
    }
  }

  double window_sum(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const {
    const auto at = [this](std::size_t r, std::size_t c) { return table_[r * (W_ + 1) + c]; };
    return at(y + h, x + w) - at(y, x + w) - at(y + h, x) + at(y, x);
  }

 private:
  static std::size_t rows_of(const Tensor& map) {
    if (map.rank() != 2) throw ShapeError("summed-area table needs a 2-D map");
    return map.dim(0);
  }

  std::size_t H_, W_;
  std::vector<double> table_;
};

// Window of size h x w maximizing the summed map; ties go to the smallest
// (y_t, x_t) in lexicographic order.
inline WindowSpec locate_window(const Tensor& map, std::size_t h, std::size_t w) {
  if (map.rank() != 2) throw ShapeError("locate_window: map must be 2-D");
  const std::size_t H = map.dim(0), W = map.dim(1);
  if (h == 0 || w == 0 || h > H || w > W)
    throw ShapeError("locate_window: window " + std::to_string(h) + "x" + std::to_string(w) +
                     " does not fit map " + shape_string(map.shape()));
  SummedAreaTable sat(map);
  WindowSpec best{0, 0, h, w};
  double best_sum = sat.window_sum(0, 0, h, w);
  for (std::size_t y = 0; y + h <= H; ++y)
    for (std::size_t x = 0; x + w <= W; ++x) {
      const double s = sat.window_sum(y, x, h, w);
      if (s > best_sum) {
        best_sum = s;
        best.y_t = y;
        best.x_t = x;
      }
    }
  return best;
}

// 1 inside the window; with feather > 0 the value falls linearly to 0 over
// `feather` pixels of Chebyshev distance outside the window border.
inline Mask make_mask(const WindowSpec& win, std::size_t height, std::size_t width, double feather = 0.0) {
  if (win.h == 0 || win.w == 0 || win.y_t + win.h > height || win.x_t + win.w > width)
    throw ShapeError("make_mask: window lies outside the image");
  if (!(feather >= 0.0)) throw DomainError("make_mask: feather must be nonnegative");
  Mask m{height, width, std::vector<float>(height * width, 0.0f)};
  auto gap = [](std::size_t p, std::size_t lo, std::size_t len) -> double {
    if (p < lo) return static_cast<double>(lo - p);
    if (p >= lo + len) return static_cast<double>(p - (lo + len - 1));
    return 0.0;
  };
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double d = std::max(gap(y, win.y_t, win.h), gap(x, win.x_t, win.w));
      double v = 0.0;
      if (d == 0.0) v = 1.0;
      else if (feather > 0.0) v = std::max(0.0, 1.0 - d / feather);
      m.values[y * width + x] = static_cast<float>(v);
    }
  return m;
}

// out = M * fake + (1 - M) * source, per channel, clamped to [0, 1].
inline Image blend(const Image& fake, const Image& source, const Mask& mask) {
  detail::require_same_extents(fake, source, "blend");
  if (mask.height != fake.height || mask.width != fake.width || mask.values.size() != fake.height * fake.width)
    throw ShapeError("blend: mask extents differ from the images");
  Image out = fake;
  const std::size_t C = fake.channels;
  for (std::size_t i = 0; i < fake.height * fake.width; ++i) {
    const float m = mask.values[i];
    if (!(m >= 0.0f && m <= 1.0f)) throw DomainError("blend: mask value outside [0,1]");
    for (std::size_t c = 0; c < C; ++c) {
      const float v = m * fake.pixels[i * C + c] + (1.0f - m) * source.pixels[i * C + c];
      out.pixels[i * C + c] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

struct ScaleRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

inline std::vector<ScaleRange> default_scale_ranges() {
  return {{40, 80}, {80, 120}, {120, 160}, {224, 224}};
}

struct AugmentResult {
  Image image;
  Mask mask;
  WindowSpec window;
};

// Random-scale window placed on the most dissimilar region, then blended.
inline AugmentResult augment_pair(const Image& fake, const Image& source, const SsimConstants& k,
                                  const std::vector<ScaleRange>& ranges, double feather,
                                  std::uint64_t seed, DssimMode mode = DssimMode::standard) {
  detail::require_same_extents(fake, source, "augment_pair");
  if (ranges.empty()) throw ConfigError("augment_pair: no scale ranges configured");
  std::size_t smallest = ranges.front().lo;
  for (const auto& r : ranges) {
    if (r.lo == 0 || r.lo > r.hi) throw ConfigError("augment_pair: invalid scale range");
    smallest = std::min(smallest, r.lo);
  }
  if (fake.height < smallest || fake.width < smallest)
    throw ConfigError("augment_pair: images are smaller than the smallest window scale " +
                      std::to_string(smallest));
  Rng rng(seed);
  const auto& range = ranges[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(ranges.size()) - 1))];
  const auto draw = [&] {
    return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(range.lo),
                                                    static_cast<std::int64_t>(range.hi)));
  };
  const std::size_t h = std::min(draw(), fake.height);
  const std::size_t w = std::min(draw(), fake.width);
  const auto map = dssim_map(fake, source, k, mode);
  const auto win = locate_window(map, h, w);
  auto mask = make_mask(win, fake.height, fake.width, feather);
  auto out = blend(fake, source, mask);
  return {std::move(out), std::move(mask), win};
}

}  // namespace d2f
