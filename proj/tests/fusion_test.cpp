#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "d2f/checkpoint.hpp"
#include "d2f/diagnostics.hpp"
#include "d2f/features.hpp"
#include "d2f/fusion.hpp"
#include "d2f/gradcheck.hpp"

using namespace d2f;
using TensorD = BasicTensor<double>;
namespace fs = std::filesystem;

namespace {

FusionConfig small_config() {
  FusionConfig c;
  c.channels = 4;
  c.height = 8;
  c.width = 8;
  c.reduction = 2;
  c.groups = 2;
  c.excite_reduction = 2;
  c.tokens = 4;
  c.seed = 3;
  c.batch = 8;
  return c;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "d2f_fusion_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool same_parameters(FusionModel<float>& a, FusionModel<float>& b) {
  auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->name != pb[i]->name || !ops::bitwise_equal(pa[i]->value, pb[i]->value)) return false;
  return true;
}

}  // namespace

TEST(FusionForward, ZeroInputGivesBias) {
  auto m = FusionModel<float>::init(small_config());
  m.classifier_bias.value[0] = 0.25f;
  auto out = fusion_forward(Tensor(Shape{4, 8, 8}), m);
  EXPECT_FLOAT_EQ(out.logit, 0.25f);
  for (float v : out.bi.values()) EXPECT_EQ(v, 0.0f);
  for (float v : out.sp.values()) EXPECT_EQ(v, 0.0f);
  for (float v : out.p.values()) EXPECT_EQ(v, 0.0f);
}

TEST(FusionForward, ZeroWeightsComposeModuleCases) {
  auto m = FusionModel<double>::init(small_config());
  for (auto* p : m.head_parameters()) p->value.fill(0.0);
  m.classifier.value = TensorD::uniform({4}, 1, -1, 1);
  m.classifier_bias.value[0] = -0.5;
  auto x = TensorD::uniform({4, 8, 8}, 2, -1, 1);
  Tape<double> tape;
  auto v = fusion_forward(tape, tape.constant(x), m);
  const auto& merged = v.merged.value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(merged[i], 0.75 * x[i], 1e-15);
  for (double e : v.p.value().values()) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(v.logit.value().item(), -0.5);
}

TEST(FusionForward, ShapeMismatchIsConfigError) {
  auto m = FusionModel<float>::init(small_config());
  EXPECT_THROW(fusion_forward(Tensor(Shape{4, 8, 4}), m), ConfigError);
  EXPECT_THROW(fusion_forward(Tensor(Shape{8, 8, 8}), m), ConfigError);
  FusionConfig bad = small_config();
  bad.tokens = 3;
  EXPECT_THROW(FusionModel<float>::init(bad), ConfigError);
}

TEST(FusionForward, DeterministicPerSeed) {
  auto a = FusionModel<float>::init(small_config()), b = FusionModel<float>::init(small_config());
  EXPECT_TRUE(same_parameters(a, b));
  auto x = Tensor::uniform({4, 8, 8}, 4, -1, 1);
  EXPECT_EQ(fusion_forward(x, a).logit, fusion_forward(x, b).logit);
}

// Extended precision keeps loss rounding far below the tiniest gradients.
using TensorL = BasicTensor<long double>;

TEST(FusionForward, GradientCheckEveryParameterGroup) {
  auto m = FusionModel<float>::init(small_config()).cast<long double>();
  for (auto* b : {&m.bidir.squeeze_bias, &m.bidir.row_bias, &m.spectral.excite_out_bias})
    b->value = TensorL::uniform(b->value.shape(), 5, -0.3, 0.3);
  auto x = TensorL::uniform({4, 8, 8}, 6, -1, 1);
  auto rx = gradient_check<long double>(
      [&m](Tape<long double>& t, Var<long double> v) { return fusion_forward(t, v, m).logit; }, x, 1e-6);
  EXPECT_LT(rx.max_relative_error, 1e-4);
  auto checks = check_parameters<long double>(
      m.head_parameters(), [&](Tape<long double>& t) { return fusion_forward(t, t.constant(x), m).logit; }, 1e-6);
  ASSERT_EQ(checks.size(), m.head_parameters().size());
  for (const auto& c : checks) EXPECT_LT(c.report.max_relative_error, 1e-4) << c.name;
}

TEST(FusionForward, EndToEndLossGradientCheck) {
  auto m = FusionModel<float>::init(small_config()).cast<long double>();
  auto data = make_toy_dataset(2, 32, 7);
  auto img = data[1].image.to_tensor().cast<long double>();
  auto checks = check_parameters<long double>(
      m.parameters(),
      [&](Tape<long double>& t) {
        auto feats = backbone_forward(t, t.constant(img), m);
        return bce_loss(fusion_forward(t, feats, m).logit, data[1].label);
      },
      1e-6);
  for (const auto& c : checks) EXPECT_LT(c.report.max_relative_error, 1e-4) << c.name;
}

TEST(GradientSuite, AllModulesWithinTolerance) {
  for (std::uint64_t seed : {0u, 1u}) {
    auto results = run_gradient_suite(small_config(), seed);
    ASSERT_EQ(results.size(), 4u);
    for (const auto& r : results) EXPECT_LT(r.max_relative_error, kGradCheckTolerance) << r.module << " " << r.worst;
    EXPECT_TRUE(gradient_suite_passes(results));
  }
}

TEST(BceLoss, ReferenceValuesAndSymmetry) {
  EXPECT_NEAR(bce_loss(0.0, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(0.0, 1), 0.6931, 1e-4);
  EXPECT_NEAR(bce_loss(10.0, 1), -std::log(1.0 / (1.0 + std::exp(-10.0))), 1e-15);
  EXPECT_NEAR(bce_loss(10.0, 1), 4.54e-5, 1e-7);
  for (double z : {-30.0, -2.5, 0.0, 0.7, 12.0, 800.0}) {
    EXPECT_NEAR(bce_loss(z, 1), bce_loss(-z, 0), 1e-9);
    EXPECT_TRUE(std::isfinite(bce_loss(z, 0)));
  }
  EXPECT_THROW(bce_loss(0.0, 2), DomainError);
}

TEST(BceLoss, TapeGradient) {
  for (int label : {0, 1}) {
    auto r = gradient_check<double>([label](Tape<double>&, Var<double> v) { return bce_loss(v, label); },
                                    TensorD::scalar(0.8), 1e-6);
    EXPECT_LT(r.max_relative_error, 1e-6);
  }
}

TEST(ToyDataset, DeterministicBalancedAndLocal) {
  auto a = make_toy_dataset(40, 32, 9), b = make_toy_dataset(40, 32, 9);
  ASSERT_EQ(a.size(), 40u);
  std::size_t fakes = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].label, int(i % 2));
    fakes += a[i].label;
  }
  EXPECT_EQ(fakes, 20u);
  EXPECT_NE(make_toy_dataset(2, 32, 10)[0].image, a[0].image);

  // Pixels changed by a fake must lie in one side/4 window grown by the feather.
  for (std::size_t i = 1; i < a.size(); i += 2) {
    const auto& fake = a[i].image;
    const auto& real = a[i - 1].image;
    std::size_t y0 = 32, y1 = 0, x0 = 32, x1 = 0;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          if (fake.at(y, x, c) != real.at(y, x, c)) {
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
          }
    ASSERT_LE(y0, y1) << "fake " << i << " equals its base";
    EXPECT_LE(y1 - y0 + 1, 8u + 2u);
    EXPECT_LE(x1 - x0 + 1, 8u + 2u);
  }
  EXPECT_THROW(make_toy_dataset(3, 32, 1), ConfigError);
}

TEST(TrainToy, ZeroLearningRateLeavesModelAtChance) {
  auto data = make_toy_dataset(200, 32, 11);
  auto m = FusionModel<float>::init(small_config());
  auto untouched = m;
  auto r = train_toy(m, data, 1, 0.0, 12);
  EXPECT_TRUE(same_parameters(m, untouched));
  EXPECT_EQ(r.before.auc, r.heldout.auc);
  EXPECT_GE(r.heldout.auc, 0.3);
  EXPECT_LE(r.heldout.auc, 0.7);

  auto m0 = untouched;
  auto r0 = train_toy(m0, data, 0, 0.5, 12);
  EXPECT_TRUE(same_parameters(m0, untouched));
  EXPECT_EQ(r0.heldout.auc, r.heldout.auc);
  EXPECT_EQ(r0.heldout.acc, r.heldout.acc);
  EXPECT_EQ(r0.steps, 0u);
}

TEST(TrainToy, DeterministicTrajectory) {
  auto data = make_toy_dataset(80, 32, 13);
  auto a = FusionModel<float>::init(small_config()), b = FusionModel<float>::init(small_config());
  auto ra = train_toy(a, data, 2, 0.3, 14), rb = train_toy(b, data, 2, 0.3, 14);
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  EXPECT_EQ(ra.steps, 16u);
  EXPECT_TRUE(same_parameters(a, b));
}

TEST(TrainToy, DivergenceReportsStep) {
  auto data = make_toy_dataset(40, 32, 15);
  auto m = FusionModel<float>::init(small_config());
  try {
    train_toy(m, data, 5, 1e30, 16);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GT(e.step(), 0u);
  }
  EXPECT_THROW(train_toy(m, data, 1, -1.0, 1), DomainError);
}

TEST(Features, RoundTripAndRejections) {
  auto dir = temp_dir("features");
  auto f = Tensor::uniform({8, 16, 16}, 17, -5, 5);
  save_features(dir / "f.d2ft", f);
  EXPECT_TRUE(ops::bitwise_equal(load_features(dir / "f.d2ft"), f));
  fs::resize_file(dir / "f.d2ft", fs::file_size(dir / "f.d2ft") - 3);
  EXPECT_THROW(load_features(dir / "f.d2ft"), FormatError);
  save_tensor(dir / "flat.d2ft", Tensor(Shape{4}));
  EXPECT_THROW(load_features(dir / "flat.d2ft"), ShapeError);
  EXPECT_THROW(save_features(dir / "g.d2ft", Tensor(Shape{4, 4})), ShapeError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto dir = temp_dir("ckpt");
  auto cfg = small_config();
  cfg.basis_variant = BasisVariant::dct2_standard;
  auto m = FusionModel<float>::init(cfg);
  m.classifier_bias.value[0] = 0.125f;
  save_checkpoint(dir, m);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  auto back = load_checkpoint(dir);
  EXPECT_TRUE(same_parameters(m, back));
  EXPECT_EQ(back.config.basis_variant, BasisVariant::dct2_standard);
  EXPECT_EQ(back.spectral.freqs, m.spectral.freqs);
  fs::remove(dir / "head.bias.d2ft");
  EXPECT_THROW(load_checkpoint(dir), IoError);
}

TEST(Config, JsonRoundTripAndValidation) {
  auto dir = temp_dir("config");
  auto write = [&](const std::string& text) {
    write_text_atomic(dir / "c.json", text);
    return dir / "c.json";
  };
  auto c = load_config(write(R"({"C": 8, "H": 4, "W": 4, "reduction": 2, "n": 2, "freqs": [[0,0],[1,2]],
                                 "basis_variant": "dct2-standard", "r_e": 4, "m": 4, "seed": 5,
                                 "epochs": 3, "lr": 0.1, "batch": 4})"));
  EXPECT_EQ(c.channels, 8u);
  EXPECT_EQ(c.freqs, (std::vector<FrequencyIndex>{{0, 0}, {1, 2}}));
  EXPECT_EQ(c.basis_variant, BasisVariant::dct2_standard);
  nlohmann::json j = c;
  auto again = j.get<FusionConfig>();
  EXPECT_EQ(nlohmann::json(again), j);
  EXPECT_THROW(load_config(write(R"({"C": 8, "bogus": 1})")), ConfigError);
  EXPECT_THROW(load_config(write(R"({"C": 6})")), ConfigError);
  EXPECT_THROW(load_config(write(R"({"freqs": [[9, 0]], "n": 1, "C": 16})")), ConfigError);
  EXPECT_THROW(load_config(write("{not json")), FormatError);
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);
  auto d = load_config(write("{}"));
  EXPECT_EQ(d.resolved_freqs(), zigzag_frequencies(16, 8, 8));
}
