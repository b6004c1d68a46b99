#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "d2f/fusion.hpp"
#include "d2f/gradcheck.hpp"

// Finite-difference audit of every trainable block. It runs in extended
// precision: with double, rounding in the loss (about ulp(f) / eps) swamps
// gradient entries near the 1e-8 floor of the relative-error measure.
namespace d2f {

using AuditScalar = long double;

struct ModuleGradCheck {
  std::string module;
  double max_relative_error = 0.0;
  std::string worst;  // input or parameter holding the largest error
};

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckStep = 1e-6;

namespace detail {

inline void merge_report(ModuleGradCheck& m, const std::string& name, const GradCheckReport& r) {
  if (m.worst.empty() || r.max_relative_error > m.max_relative_error) {
    m.max_relative_error = r.max_relative_error;
    m.worst = name;
  }
}

inline ModuleGradCheck check_block(const std::string& module, const BasicTensor<AuditScalar>& x,
                                   const std::vector<Parameter<AuditScalar>*>& params,
                                   const std::function<Var<AuditScalar>(Tape<AuditScalar>&, Var<AuditScalar>)>& block) {
  ModuleGradCheck m{module, 0.0, ""};
  merge_report(m, "input", gradient_check<AuditScalar>(block, x, kGradCheckStep));
  const auto per_param = check_parameters<AuditScalar>(
      params, [&](Tape<AuditScalar>& t) { return block(t, t.constant(x)); }, kGradCheckStep);
  for (const auto& p : per_param) merge_report(m, p.name, p.report);
  return m;
}

}  // namespace detail

// Checks the attention blocks, the superposition head and the end-to-end
// loss of a model built from `cfg` with the given seed. Biases are drawn
// nonzero so their gradients are exercised away from the init point.
inline std::vector<ModuleGradCheck> run_gradient_suite(FusionConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.validate();
  auto model = FusionModel<AuditScalar>::init(cfg);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto* p : model.parameters())
    if (p->value.rank() == 1) p->value = BasicTensor<AuditScalar>::uniform(p->value.shape(), rng, -0.3, 0.3);
  const auto x = BasicTensor<AuditScalar>::uniform({cfg.channels, cfg.height, cfg.width}, rng, -1.0, 1.0);

  std::vector<ModuleGradCheck> out;
  out.push_back(detail::check_block("bidir", x, model.bidir.parameters(), [&](Tape<AuditScalar>& t, Var<AuditScalar> v) {
    return ag::sum(bidir_forward(t, v, model.bidir).out);
  }));
  out.push_back(detail::check_block("spectral", x, model.spectral.parameters(),
                                    [&](Tape<AuditScalar>& t, Var<AuditScalar> v) {
                                      return ag::sum(spectral_forward(t, v, model.spectral).out);
                                    }));
  out.push_back(detail::check_block("superposition", x, model.wave.parameters(),
                                    [&](Tape<AuditScalar>& t, Var<AuditScalar> v) {
                                      return ag::sum(superposition_forward(t, v, model.wave));
                                    }));
  const auto sample = make_toy_dataset(2, cfg.image_size(), seed)[1];
  const auto image = sample.image.to_tensor().cast<AuditScalar>();
  out.push_back(detail::check_block("end_to_end", image, model.parameters(), [&](Tape<AuditScalar>& t, Var<AuditScalar> v) {
    return bce_loss(fusion_forward(t, backbone_forward(t, v, model), model).logit, sample.label);
  }));
  return out;
}

inline bool gradient_suite_passes(const std::vector<ModuleGradCheck>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const ModuleGradCheck& m) { return m.max_relative_error < kGradCheckTolerance; });
}

}  // namespace d2f
