#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "d2f/gradcheck.hpp"
#include "d2f/superposition.hpp"

using namespace d2f;
using TensorD = BasicTensor<double>;

namespace {

constexpr double kPi = std::numbers::pi;

WaveTokens<double> random_waves(std::size_t m, std::size_t C, std::size_t s, Rng& rng) {
  return {TensorD::uniform({m, C, s}, rng, 0, 2), TensorD::uniform({m, C, s}, rng, -4, 4)};
}

// o = Re(Wt z) + Im-part contribution via a complex matrix product:
// with z_r = a_r e^{i theta_r}, Wt.Re(z) + Wi.Im(z) = Re((Wt - i Wi) z).
TensorD complex_fuse(const WaveTokens<double>& w, const TensorD& wt, const TensorD& wi) {
  const std::size_t m = w.amplitude.dim(0), cs = w.amplitude.size() / m;
  TensorD out(w.amplitude.shape());
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < cs; ++k) {
      std::complex<double> acc = 0;
      for (std::size_t r = 0; r < m; ++r) {
        const auto z = std::polar(w.amplitude[r * cs + k], w.phase[r * cs + k]);
        acc += std::complex<double>(wt(j, r), -wi(j, r)) * z;
      }
      out[j * cs + k] = acc.real();
    }
  return out;
}

WaveParams<double> identity_params(std::size_t C, std::size_t m) {
  Rng rng(0);
  auto p = WaveParams<double>::init(C, m, rng);
  p.amplitude_fc.value = TensorD::identity(C);
  p.phase_fc.value.fill(0.0);
  p.real_mix.value = TensorD::identity(m);
  p.imag_mix.value.fill(0.0);
  p.output_fc.value = TensorD::identity(C);
  return p;
}

}  // namespace

TEST(Tokens, SplitExtremesAndRoundTrip) {
  auto x = Tensor::uniform({3, 4, 6}, 1, -1, 1);
  auto one = split_tokens(x, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].shape(), (Shape{3, 24}));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(one[0][i], x[i]);

  auto fine = split_tokens(x, 24);
  for (std::size_t j = 0; j < 24; ++j) {
    ASSERT_EQ(fine[j].shape(), (Shape{3, 1}));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(fine[j](c, 0), x(c, j / 6, j % 6));
  }
  for (std::size_t m : {1u, 2u, 3u, 4u, 6u, 8u, 12u, 24u})
    EXPECT_TRUE(ops::bitwise_equal(merge_tokens(split_tokens(x, m), 4, 6), x)) << m;
  EXPECT_THROW(split_tokens(x, 5), ConfigError);
  EXPECT_THROW(split_tokens(x, 0), ConfigError);
}

TEST(Tokens, ContiguousSlotRanges) {
  auto x = Tensor::uniform({2, 4, 4}, 2, -1, 1);
  auto t = split_tokens(x, 4);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(t[j](1, k), x[16 + j * 4 + k]);
}

TEST(Amplitude, IdentityAndNegatedIdentity) {
  auto tok = TensorD::uniform({4, 5}, 3, 0, 2);
  auto id = TensorD::identity(4);
  EXPECT_TRUE(ops::bitwise_equal(amplitude(tok, id), tok));
  auto signed_tok = TensorD::uniform({4, 5}, 4, -2, 2);
  auto a = amplitude(signed_tok, ops::mul(id, -1.0));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], std::abs(signed_tok[i]));
}

TEST(Amplitude, MatchesPerSlotOracle) {
  Rng rng(5);
  auto tok = TensorD::uniform({6, 7}, rng, -1, 1), w = TensorD::uniform({6, 6}, rng, -1, 1);
  auto a = amplitude(tok, w);
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t t = 0; t < 7; ++t) {
      double s = 0;
      for (std::size_t k = 0; k < 6; ++k) s += w(c, k) * tok(k, t);
      EXPECT_NEAR(a(c, t), std::abs(s), 1e-6);
      EXPECT_GE(a(c, t), 0.0);
    }
  EXPECT_THROW(amplitude(tok, TensorD::identity(5)), ShapeError);
}

TEST(Phase, ZeroAndIdentity) {
  auto tok = TensorD::uniform({4, 5}, 6, -3, 3);
  auto zero = phase(tok, TensorD(Shape{4, 4}));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(ops::bitwise_equal(phase(tok, TensorD::identity(4)), tok));
  EXPECT_THROW(phase(tok, TensorD(Shape{3, 4})), ShapeError);
}

TEST(Phase, GradientCheck) {
  auto w = TensorD::uniform({4, 4}, 7, -1, 1);
  auto tok = TensorD::uniform({4, 6}, 8, -1, 1);
  auto r = gradient_check<double>(
      [&w](Tape<double>& t, Var<double> v) { return ag::sum(ag::sin(ag::conv1x1(v, t.constant(w)))); }, tok, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(SuperposePair, InterferenceCases) {
  EXPECT_NEAR(superpose_pair(3.0, 0.4, 4.0, 0.4), 7.0, 1e-12);
  EXPECT_NEAR(superpose_pair(3.0, 0.4, 4.0, 0.4 + kPi), 1.0, 1e-12);
  EXPECT_NEAR(superpose_pair(3.0, 0.0, 4.0, kPi / 2), 5.0, 1e-12);
  EXPECT_EQ(superpose_pair(2.0, 1.0, 2.0, 1.0 + kPi) >= 0.0, true);
}

TEST(SuperposePair, MatchesComplexModulus) {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double ak = rng.uniform(0, 10), aj = rng.uniform(0, 10);
    const double tk = rng.uniform(-20, 20), tj = rng.uniform(-20, 20);
    const double ref = std::abs(std::polar(ak, tk) + std::polar(aj, tj));
    EXPECT_NEAR(superpose_pair(ak, tk, aj, tj), ref, 1e-6);
  }
  TensorD a(Shape{2}, 1.0), t(Shape{2}, 0.0), neg(Shape{2}, std::vector<double>{1.0, -1.0});
  EXPECT_THROW(superpose_pair(a, t, neg, t), DomainError);
  EXPECT_THROW(superpose_pair(a, t, TensorD(Shape{3}), t), ShapeError);
}

TEST(TokenFuse, IdentityConfigurations) {
  Rng rng(10);
  auto amp = TensorD::uniform({4, 3, 2}, rng, 0, 2);
  auto id = TensorD::identity(4);
  WaveTokens<double> real{amp, TensorD(amp.shape(), 0.0)};
  auto o = token_fuse(real, id, TensorD(Shape{4, 4}));
  for (std::size_t i = 0; i < o.size(); ++i) EXPECT_NEAR(o[i], amp[i], 1e-15);
  WaveTokens<double> imag{amp, TensorD(amp.shape(), kPi / 2)};
  auto o2 = token_fuse(imag, TensorD::uniform({4, 4}, rng, -1, 1), id);
  for (std::size_t i = 0; i < o2.size(); ++i) EXPECT_NEAR(o2[i], amp[i], 1e-12);
}

TEST(TokenFuse, MatchesComplexMatrixOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto w = random_waves(5, 3, 4, rng);
    auto wt = TensorD::uniform({5, 5}, rng, -1, 1), wi = TensorD::uniform({5, 5}, rng, -1, 1);
    auto got = token_fuse(w, wt, wi), ref = complex_fuse(w, wt, wi);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-5);
  }
}

TEST(TokenFuse, LinearInMixingWeights) {
  Rng rng(12);
  auto w = random_waves(4, 3, 2, rng);
  auto wt = TensorD::uniform({4, 4}, rng, -1, 1), wt2 = TensorD::uniform({4, 4}, rng, -1, 1);
  auto wi = TensorD::uniform({4, 4}, rng, -1, 1), wi2 = TensorD::uniform({4, 4}, rng, -1, 1);
  auto both = token_fuse(w, ops::add(wt, wt2), ops::add(wi, wi2));
  auto a = token_fuse(w, wt, wi), b = token_fuse(w, wt2, wi2);
  for (std::size_t i = 0; i < both.size(); ++i) EXPECT_NEAR(both[i], a[i] + b[i], 1e-6);
  EXPECT_THROW(token_fuse(w, TensorD(Shape{3, 3}), wi), ShapeError);
}

TEST(SuperpositionForward, IdentityConfiguration) {
  auto p = identity_params(4, 8);
  auto x = TensorD::uniform({4, 4, 4}, 13, 0, 2);
  auto out = superposition_forward(x, p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out[i], x[i], 1e-12);
}

TEST(SuperpositionForward, AnnihilatingFusion) {
  Rng rng(14);
  auto p = WaveParams<double>::init(4, 4, rng);
  p.real_mix.value.fill(0.0);
  p.imag_mix.value.fill(0.0);
  auto out = superposition_forward(TensorD::uniform({4, 4, 4}, 15, -3, 3), p);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(SuperpositionForward, MatchesTokenwiseComposition) {
  Rng rng(16);
  auto p = WaveParams<double>::init(6, 4, rng);
  auto x = TensorD::uniform({6, 4, 6}, rng, -1, 1);
  auto got = superposition_forward(x, p);
  auto fused = token_fuse(make_waves(x, p), p.real_mix.value, p.imag_mix.value);
  std::vector<TensorD> tokens;
  for (std::size_t j = 0; j < 4; ++j) {
    TensorD t(Shape{6, 6});
    for (std::size_t k = 0; k < 36; ++k) t[k] = fused[j * 36 + k];
    tokens.push_back(ops::conv1x1(t, p.output_fc.value));
  }
  auto ref = merge_tokens(tokens, 4, 6);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
}

TEST(SuperpositionForward, ShapeDeterminismAndPeriodicity) {
  Rng rng(17);
  auto p = WaveParams<double>::init(4, 8, rng);
  auto x = TensorD::uniform({4, 4, 4}, rng, -1, 1);
  auto a = superposition_forward(x, p), b = superposition_forward(x, p);
  EXPECT_EQ(a.shape(), x.shape());
  EXPECT_TRUE(ops::bitwise_equal(a, b));

  auto waves = make_waves(x, p);
  auto shifted = waves;
  for (auto& v : shifted.phase.values()) v += 2 * kPi;
  auto o1 = token_fuse(waves, p.real_mix.value, p.imag_mix.value);
  auto o2 = token_fuse(shifted, p.real_mix.value, p.imag_mix.value);
  for (std::size_t i = 0; i < o1.size(); ++i) EXPECT_NEAR(o1[i], o2[i], 1e-5);
}

TEST(SuperpositionForward, Errors) {
  Rng rng(18);
  auto p = WaveParams<double>::init(4, 3, rng);
  EXPECT_THROW(superposition_forward(TensorD(Shape{4, 4, 4}), p), ConfigError);
  auto q = WaveParams<double>::init(4, 4, rng);
  EXPECT_THROW(superposition_forward(TensorD(Shape{5, 4, 4}), q), ShapeError);
}

TEST(SuperpositionForward, GradientCheckInputAndWeights) {
  Rng rng(19);
  auto p = WaveParams<double>::init(4, 4, rng);
  auto x = TensorD::uniform({4, 4, 4}, rng, -1, 1);
  // Keep every pre-abs response away from the kink.
  auto pre = ops::conv1x1(x.reshaped({4, 16}), p.amplitude_fc.value);
  double smallest = 1e9;
  for (double v : pre.values()) smallest = std::min(smallest, std::abs(v));
  ASSERT_GT(smallest, 1e-3);
  auto rx = gradient_check<double>(
      [&p](Tape<double>& t, Var<double> v) { return ag::sum(superposition_forward(t, v, p)); }, x, 1e-6);
  EXPECT_LT(rx.max_relative_error, 1e-4);
  auto checks = check_parameters<double>(
      p.parameters(), [&](Tape<double>& t) { return ag::sum(superposition_forward(t, t.constant(x), p)); }, 1e-6);
  ASSERT_EQ(checks.size(), 5u);
  for (const auto& c : checks) EXPECT_LT(c.report.max_relative_error, 1e-4) << c.name;
}
