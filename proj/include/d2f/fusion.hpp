#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "d2f/config.hpp"
#include "d2f/image.hpp"
#include "d2f/metrics.hpp"
#include "d2f/spatial_attention.hpp"
#include "d2f/spectral_attention.hpp"
#include "d2f/superposition.hpp"

namespace d2f {

// Toy backbone (4x average pool, input normalization, 1x1 stem, ReLU), the two attention blocks
// in parallel, their sum fed to the superposition head, and a linear unit
// on the globally pooled result.
template <class T>
struct FusionModel {
  FusionConfig config;
  Parameter<T> stem_kernel;  // C x 3
  Parameter<T> stem_bias;    // C
  BiDirParams<T> bidir;
  SpectralParams<T> spectral;
  WaveParams<T> wave;
  Parameter<T> classifier;       // C
  Parameter<T> classifier_bias;  // 1

  // All weights seeded from config.seed with fan-in scaling.
  static FusionModel init(const FusionConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t C = cfg.channels;
    const double b_stem = 1.0 / std::sqrt(3.0);
    FusionModel m;
    m.config = cfg;
    m.stem_kernel = {"stem.kernel", BasicTensor<T>::uniform({C, 3}, rng, -b_stem, b_stem)};
    m.stem_bias = {"stem.bias", BasicTensor<T>(Shape{C}, T(0.1))};
    m.bidir = BiDirParams<T>::init(C, cfg.reduction, rng);
    m.spectral = SpectralParams<T>::init(C, cfg.resolved_freqs(), cfg.basis_variant, cfg.excite_reduction, rng);
    m.wave = WaveParams<T>::init(C, cfg.tokens, rng);
    const double b_cls = 1.0 / std::sqrt(static_cast<double>(C));
    m.classifier = {"head.classifier", BasicTensor<T>::uniform({C}, rng, -b_cls, b_cls)};
    m.classifier_bias = {"head.bias", BasicTensor<T>(Shape{1})};
    return m;
  }

  // Everything downstream of the backbone.
  std::vector<Parameter<T>*> head_parameters() {
    std::vector<Parameter<T>*> out;
    for (auto* p : bidir.parameters()) out.push_back(p);
    for (auto* p : spectral.parameters()) out.push_back(p);
    for (auto* p : wave.parameters()) out.push_back(p);
    out.push_back(&classifier);
    out.push_back(&classifier_bias);
    return out;
  }

  std::vector<Parameter<T>*> parameters() {
    auto out = head_parameters();
    out.insert(out.begin(), {&stem_kernel, &stem_bias});
    return out;
  }

  template <class U>
  FusionModel<U> cast() const {
    auto m = FusionModel<U>::init(config);
    auto src = const_cast<FusionModel*>(this)->parameters();
    auto dst = m.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value.template cast<U>();
    return m;
  }
};

template <class T>
struct FusionVars {
  Var<T> logit, bi, sp, merged, p;
};

template <class T>
FusionVars<T> fusion_forward(Tape<T>& tape, Var<T> x, FusionModel<T>& model) {
  const auto& cfg = model.config;
  if (x.value().shape() != Shape{cfg.channels, cfg.height, cfg.width})
    throw ConfigError("fusion: features " + shape_string(x.value().shape()) + " do not match configured " +
                      shape_string(Shape{cfg.channels, cfg.height, cfg.width}));
  FusionVars<T> v;
  v.bi = bidir_forward(tape, x, model.bidir).out;
  v.sp = spectral_forward(tape, x, model.spectral).out;
  v.merged = ag::add(v.bi, v.sp);
  v.p = superposition_forward(tape, v.merged, model.wave);
  auto pooled = ag::mean_positions(v.p);
  v.logit = ag::add(ag::dot(tape.watch(model.classifier), pooled), tape.watch(model.classifier_bias));
  return v;
}

// 3 x S x S image tensor -> C x S/4 x S/4 features.
template <class T>
Var<T> backbone_forward(Tape<T>& tape, Var<T> image, FusionModel<T>& model) {
  const auto& cfg = model.config;
  const std::size_t S = cfg.image_size();
  if (image.value().shape() != Shape{3, S, S})
    throw ConfigError("backbone: image " + shape_string(image.value().shape()) + " does not match " +
                      std::to_string(S) + "x" + std::to_string(S) + " RGB");
  auto pooled = ag::avg_pool(image, FusionConfig::kBackboneStride);
  pooled = ag::scale(ag::add_scalar(pooled, T(-FusionConfig::kInputMean)), T(1.0 / FusionConfig::kInputStd));
  return ag::relu(ag::conv1x1(pooled, tape.watch(model.stem_kernel), tape.watch(model.stem_bias)));
}

template <class T>
struct FusionOutput {
  T logit;
  BasicTensor<T> bi, sp, p;
};

template <class T>
FusionOutput<T> fusion_forward(const BasicTensor<T>& x, FusionModel<T>& model) {
  Tape<T> tape;
  auto v = fusion_forward(tape, tape.constant(x), model);
  return {v.logit.value().item(), v.bi.value(), v.sp.value(), v.p.value()};
}

// -[y log sigmoid(z) + (1 - y) log(1 - sigmoid(z))], stable form.
template <class S>
S bce_loss_value(S logit, int label) {
  if (label != 0 && label != 1) throw DomainError("bce_loss: label must be 0 or 1");
  return std::max(logit, S{0}) - logit * static_cast<S>(label) + std::log1p(std::exp(-std::abs(logit)));
}

inline double bce_loss(double logit, int label) { return bce_loss_value(logit, label); }

template <class T>
Var<T> bce_loss(Var<T> logit, int label) {
  using A = accum_t<T>;
  const A z = logit.value().item();
  const A loss = bce_loss_value(z, label);
  return logit.tape->record(BasicTensor<T>::scalar(static_cast<T>(loss)), {logit},
                            [logit, z, label](Tape<T>& tp, const BasicTensor<T>& g) {
                              const A d = ops::sigmoid_scalar(z) - static_cast<A>(label);
                              tp.accumulate(logit, BasicTensor<T>::scalar(static_cast<T>(g[0] * d)));
                            });
}

struct LabeledImage {
  Image image;
  int label;  // 1 fake, 0 real
};

namespace detail {

// Smooth RGB image: bilinear upsampling of an 8 x 8 noise grid per channel.
inline Image smooth_noise_image(std::size_t size, Rng& rng) {
  constexpr std::size_t grid = 8;
  Image img(size, size, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> g(grid * grid);
    for (auto& v : g) v = rng.uniform(0.25, 0.75);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double gy = size > 1 ? static_cast<double>(y) * (grid - 1) / (size - 1) : 0.0;
        const double gx = size > 1 ? static_cast<double>(x) * (grid - 1) / (size - 1) : 0.0;
        const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), grid - 2);
        const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), grid - 2);
        const double fy = gy - y0, fx = gx - x0;
        const double v = (1 - fy) * ((1 - fx) * g[y0 * grid + x0] + fx * g[y0 * grid + x0 + 1]) +
                         fy * ((1 - fx) * g[(y0 + 1) * grid + x0] + fx * g[(y0 + 1) * grid + x0 + 1]);
        img.at(y, x, c) = static_cast<float>(v);
      }
  }
  return img;
}

}  // namespace detail

inline constexpr double kToyCheckerAmplitude = 0.2;

// Even indices are real smooth images. Each odd index is the preceding real
// image with a checkerboard-perturbed window blended in (feather 2). The
// checkerboard cell matches the backbone stride so it survives pooling.
inline std::vector<LabeledImage> make_toy_dataset(std::size_t count, std::size_t image_size, std::uint64_t seed) {
  if (count % 2 != 0) throw ConfigError("toy dataset size must be even");
  if (image_size < 8) throw ConfigError("toy images must be at least 8 pixels wide");
  Rng rng(seed);
  std::vector<LabeledImage> out;
  out.reserve(count);
  const std::size_t side = image_size / 4;
  const std::size_t cell = FusionConfig::kBackboneStride;
  for (std::size_t i = 0; i < count; ++i) {
    if (i % 2 == 0) {
      out.push_back({detail::smooth_noise_image(image_size, rng), 0});
      continue;
    }
    const Image& base = out[i - 1].image;
    const auto y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(image_size - side)));
    const auto x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(image_size - side)));
    Image patch = base;
    for (std::size_t py = 0; py < image_size; ++py)
      for (std::size_t px = 0; px < image_size; ++px) {
        const double sign = ((py / cell + px / cell) % 2 == 0) ? 1.0 : -1.0;
        for (std::size_t c = 0; c < 3; ++c) {
          auto& v = patch.at(py, px, c);
          v = static_cast<float>(std::clamp(v + sign * kToyCheckerAmplitude, 0.0, 1.0));
        }
      }
    const auto mask = make_mask(WindowSpec{x, y, side, side}, image_size, image_size, 2.0);
    out.push_back({blend(patch, base, mask), 1});
  }
  return out;
}

struct TrainResult {
  MetricsReport before;   // held-out, untrained
  MetricsReport heldout;  // held-out, after training
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

// Held-out scores sigmoid(logit) for the given images.
template <class T>
ScoreSet score_images(FusionModel<T>& model, const std::vector<LabeledImage>& data, std::size_t begin,
                      std::size_t end) {
  ScoreSet s;
  for (std::size_t i = begin; i < end; ++i) {
    Tape<T> tape;
    auto feats = backbone_forward(tape, tape.constant(data[i].image.to_tensor().template cast<T>()), model);
    const double z = fusion_forward(tape, feats, model).logit.value().item();
    s.scores.push_back(ops::sigmoid_scalar(z));
    s.labels.push_back(data[i].label);
  }
  return s;
}

// Minibatch gradient descent on mean BCE over the first 80% of `data`;
// metrics are computed on the remaining 20%.
template <class T>
TrainResult train_toy(FusionModel<T>& model, const std::vector<LabeledImage>& data, std::size_t epochs,
                      double lr, std::uint64_t seed) {
  if (data.size() < 10) throw ConfigError("train_toy: dataset too small to split");
  if (!(lr >= 0.0)) throw DomainError("train_toy: learning rate must be nonnegative");
  const std::size_t split = data.size() * 4 / 5;
  const std::size_t batch = model.config.batch;
  const double threshold = model.config.threshold;
  auto params = model.parameters();
  zero_grad(params);

  TrainResult result;
  result.before = evaluate(score_images(model, data, split, data.size()), threshold);

  std::vector<Tensor> inputs;
  inputs.reserve(split);
  for (std::size_t i = 0; i < split; ++i) inputs.push_back(data[i].image.to_tensor());

  Rng rng(seed);
  std::vector<std::size_t> order(split);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double total = 0.0;
    for (std::size_t start = 0; start < split; start += batch) {
      const std::size_t stop = std::min(split, start + batch);
      const T inv = static_cast<T>(1.0 / static_cast<double>(stop - start));
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        Tape<T> tape;
        auto feats = backbone_forward(tape, tape.constant(inputs[i].template cast<T>()), model);
        auto loss = bce_loss(fusion_forward(tape, feats, model).logit, data[i].label);
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw TrainingError("train_toy: non-finite loss", result.steps);
        total += value;
        tape.backward(ag::scale(loss, inv));
      }
      sgd_step(params, lr);
      ++result.steps;
    }
    result.epoch_loss.push_back(total / static_cast<double>(split));
  }
  result.heldout = evaluate(score_images(model, data, split, data.size()), threshold);
  return result;
}

}  // namespace d2f
