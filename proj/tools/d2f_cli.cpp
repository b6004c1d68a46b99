#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "d2f/d2f.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kContract = 3, kAcceptance = 4 };

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw d2f::IoError(std::string(what) + " not found: " + p.string());
}

d2f::DssimMode parse_dssim_mode(const std::string& s) {
  if (s == "standard") return d2f::DssimMode::standard;
  if (s == "paper-literal" || s == "paper_literal") return d2f::DssimMode::paper_literal;
  throw d2f::ConfigError("unknown dssim mode '" + s + "' (expected standard or paper-literal)");
}

std::vector<d2f::ScaleRange> parse_scales(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw d2f::ConfigError(std::string("--scales is not valid JSON: ") + e.what());
  }
  if (!j.is_array() || j.empty()) throw d2f::ConfigError("--scales must be a non-empty array of [lo, hi] pairs");
  std::vector<d2f::ScaleRange> out;
  for (const auto& r : j) {
    if (!r.is_array() || r.size() != 2 || !r[0].is_number_unsigned() || !r[1].is_number_unsigned())
      throw d2f::ConfigError("--scales entries must be [lo, hi] with nonnegative integers");
    out.push_back({r[0].get<std::size_t>(), r[1].get<std::size_t>()});
  }
  return out;
}

d2f::FusionConfig config_from(const std::string& path) {
  if (path.empty()) return {};
  require_file(path, "config");
  return d2f::load_config(path);
}

json report_json(const d2f::MetricsReport& r) {
  return {{"acc", r.acc}, {"precision", r.precision}, {"recall", r.recall},
          {"f1", r.f1},   {"auc", r.auc},             {"threshold", r.threshold}};
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("D2F_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw d2f::ConfigError("D2F_THREADS must be a positive integer");
    n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

// augment

struct AugmentJob {
  fs::path fake, source, out;
  std::uint64_t seed;
  json manifest;
};

struct AugmentOptions {
  std::string fake, source, out, scales, dssim_mode = "standard", manifest;
  std::uint64_t seed = 0;
  double feather = 4.0;
  int window = 7;
};

void run_augment_job(AugmentJob& job, const std::vector<d2f::ScaleRange>& ranges, double feather,
                     const d2f::SsimConstants& k, d2f::DssimMode mode) {
  const auto fake = d2f::read_image(job.fake);
  const auto source = d2f::read_image(job.source);
  const auto r = d2f::augment_pair(fake, source, k, ranges, feather, job.seed, mode);
  d2f::write_image(job.out, r.image);
  job.manifest = {{"fake", job.fake.string()}, {"source", job.source.string()}, {"out", job.out.string()},
                  {"x_t", r.window.x_t},       {"y_t", r.window.y_t},           {"h", r.window.h},
                  {"w", r.window.w},           {"seed", job.seed}};
}

int cmd_augment(const AugmentOptions& o) {
  const auto ranges = o.scales.empty() ? d2f::default_scale_ranges() : parse_scales(o.scales);
  const auto mode = parse_dssim_mode(o.dssim_mode);
  if (!(o.feather >= 0.0)) throw d2f::ConfigError("--feather must be nonnegative");
  d2f::SsimConstants k;
  k.k = o.window;
  k.validate();

  std::vector<AugmentJob> jobs;
  if (fs::is_directory(o.fake)) {
    if (!fs::is_directory(o.source)) throw d2f::IoError("--source must be a directory when --fake is");
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(o.fake))
      if (e.is_regular_file()) names.push_back(e.path().filename());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw d2f::IoError("no images in " + o.fake);
    fs::create_directories(o.out);
    for (std::size_t i = 0; i < names.size(); ++i) {
      require_file(fs::path(o.source) / names[i], "source image");
      jobs.push_back({fs::path(o.fake) / names[i], fs::path(o.source) / names[i], fs::path(o.out) / names[i],
                      o.seed ^ static_cast<std::uint64_t>(i), {}});
    }
  } else {
    require_file(o.fake, "fake image");
    require_file(o.source, "source image");
    jobs.push_back({o.fake, o.source, o.out, o.seed, {}});
  }

  // Pairs are independent; workers pull indices and results keep pair order.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        run_augment_job(jobs[i], ranges, o.feather, k, mode);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t threads = worker_count(jobs.size());
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::string lines;
  for (const auto& j : jobs) lines += j.manifest.dump() + "\n";
  if (!o.manifest.empty()) d2f::write_text_atomic(o.manifest, lines);
  std::cout << lines;
  return kOk;
}

// dssim

int cmd_dssim(const std::string& a, const std::string& b, const std::string& out, const std::string& mode,
              int window) {
  require_file(a, "image");
  require_file(b, "image");
  d2f::SsimConstants k;
  k.k = window;
  const auto map = d2f::dssim_map(d2f::read_image(a), d2f::read_image(b), k, parse_dssim_mode(mode));
  d2f::save_tensor(out, map);
  return kOk;
}

// attend

int cmd_attend(const std::string& features, const std::string& config, const std::string& checkpoint,
               std::optional<std::uint64_t> seed, const std::string& out_bi, const std::string& out_sp,
               const std::string& out_p, const std::string& basis) {
  require_file(features, "features");
  d2f::FusionModel<float> model;
  if (!checkpoint.empty()) {
    model = d2f::load_checkpoint(checkpoint);
  } else {
    auto cfg = config_from(config);
    if (seed) cfg.seed = *seed;
    if (!basis.empty()) cfg.basis_variant = d2f::parse_basis_variant(basis);
    cfg.validate();
    model = d2f::FusionModel<float>::init(cfg);
  }
  const auto x = d2f::load_features(features);
  const auto r = d2f::fusion_forward(x, model);
  d2f::save_tensor(out_bi, r.bi);
  d2f::save_tensor(out_sp, r.sp);
  d2f::save_tensor(out_p, r.p);
  std::cout << json{{"logit", r.logit}, {"shape", x.shape()}}.dump() << "\n";
  return kOk;
}

// gradcheck

int cmd_gradcheck(const std::string& config, std::optional<std::uint64_t> seed) {
  auto cfg = config_from(config);
  const auto results = d2f::run_gradient_suite(cfg, seed.value_or(cfg.seed));
  json modules = json::object();
  for (const auto& r : results) modules[r.module] = {{"max_relative_error", r.max_relative_error}, {"worst", r.worst}};
  const bool ok = d2f::gradient_suite_passes(results);
  std::cout << json{{"modules", modules}, {"tolerance", d2f::kGradCheckTolerance}, {"pass", ok}}.dump(2) << "\n";
  return ok ? kOk : kAcceptance;
}

// train-toy

struct TrainOptions {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, samples;
  std::optional<double> lr;
};

int cmd_train(const TrainOptions& o) {
  auto cfg = config_from(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.samples) cfg.samples = *o.samples;
  if (o.lr) cfg.lr = *o.lr;
  cfg.validate();
  auto model = d2f::FusionModel<float>::init(cfg);
  const auto data = d2f::make_toy_dataset(cfg.samples, cfg.image_size(), cfg.seed);
  const auto r = d2f::train_toy(model, data, cfg.epochs, cfg.lr, cfg.seed);
  d2f::save_checkpoint(o.out, model);
  const json metrics{{"before", report_json(r.before)},
                     {"heldout", report_json(r.heldout)},
                     {"epoch_loss", r.epoch_loss},
                     {"steps", r.steps},
                     {"samples", cfg.samples},
                     {"seed", cfg.seed}};
  d2f::write_text_atomic(fs::path(o.out) / "metrics.json", metrics.dump(2) + "\n");
  std::cout << metrics.dump(2) << "\n";
  return kOk;
}

// metrics

int cmd_metrics(const std::string& scores, double threshold) {
  require_file(scores, "score file");
  std::cout << report_json(d2f::evaluate(d2f::read_scores_csv(scores), threshold)).dump(2) << "\n";
  return kOk;
}

// inspect

int cmd_inspect(const std::string& file) {
  require_file(file, "tensor file");
  const auto t = d2f::load_tensor(file);
  double lo = t[0], hi = t[0], sum = 0.0;
  for (float v : t.values()) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
    sum += v;
  }
  const double mean = sum / static_cast<double>(t.size());
  double sq = 0.0;
  for (float v : t.values()) sq += (v - mean) * (v - mean);
  std::cout << json{{"shape", t.shape()},
                    {"count", t.size()},
                    {"min", lo},
                    {"max", hi},
                    {"mean", mean},
                    {"std", std::sqrt(sq / static_cast<double>(t.size()))}}
                   .dump(2)
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-domain attention and feature superposition toolkit"};
  app.require_subcommand(1);

  AugmentOptions aug;
  auto* augment = app.add_subcommand("augment", "Blend the most dissimilar window of a fake into its source");
  augment->add_option("--fake", aug.fake, "Fake image, or a directory of them")->required();
  augment->add_option("--source", aug.source, "Source image, or a directory with matching names")->required();
  augment->add_option("--out", aug.out, "Output image, or output directory")->required();
  augment->add_option("--seed", aug.seed, "Random seed");
  augment->add_option("--scales", aug.scales, "JSON list of [lo, hi] window size ranges");
  augment->add_option("--feather", aug.feather, "Mask feather radius in pixels");
  augment->add_option("--dssim-mode", aug.dssim_mode, "standard or paper-literal");
  augment->add_option("--window", aug.window, "SSIM box filter size (odd)");
  augment->add_option("--manifest", aug.manifest, "Also write the manifest lines to this file");

  std::string da, db, dout, dmode = "standard";
  int dwindow = 7;
  auto* dssim = app.add_subcommand("dssim", "Write the per-pixel dissimilarity map of two images");
  dssim->add_option("--a", da, "First image")->required();
  dssim->add_option("--b", db, "Second image")->required();
  dssim->add_option("--out", dout, "Output tensor file")->required();
  dssim->add_option("--mode", dmode, "standard or paper-literal");
  dssim->add_option("--window", dwindow, "SSIM box filter size (odd)");

  std::string feat, acfg, ackpt, bi, sp, pout, basis;
  std::optional<std::uint64_t> aseed;
  auto* attend = app.add_subcommand("attend", "Run both attention blocks and the superposition head on features");
  attend->add_option("--features", feat, "C x H x W feature tensor")->required();
  attend->add_option("--config", acfg, "JSON config");
  attend->add_option("--checkpoint", ackpt, "Checkpoint directory (overrides --config)");
  attend->add_option("--seed", aseed, "Parameter seed");
  attend->add_option("--basis", basis, "paper-literal or dct2-standard");
  attend->add_option("--out-bi", bi, "Bi-directional attention output")->required();
  attend->add_option("--out-sp", sp, "Spectral attention output")->required();
  attend->add_option("--out-p", pout, "Superposition output")->required();

  std::string gcfg;
  std::optional<std::uint64_t> gseed;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference audit of every block");
  gradcheck->add_option("--config", gcfg, "JSON config");
  gradcheck->add_option("--seed", gseed, "Seed for parameters and inputs");

  TrainOptions tr;
  auto* train = app.add_subcommand("train-toy", "Train on the synthetic dataset and write a checkpoint");
  train->add_option("--config", tr.config, "JSON config");
  train->add_option("--out", tr.out, "Checkpoint directory")->required();
  train->add_option("--seed", tr.seed, "Seed override");
  train->add_option("--epochs", tr.epochs, "Epoch override");
  train->add_option("--samples", tr.samples, "Dataset size override");
  train->add_option("--lr", tr.lr, "Learning rate override");

  std::string scores;
  double threshold = 0.5;
  auto* metrics = app.add_subcommand("metrics", "ACC, precision, recall, F1 and AUC of a score file");
  metrics->add_option("--scores", scores, "CSV with header score,label")->required();
  metrics->add_option("--threshold", threshold, "Decision threshold");

  std::string ifile;
  auto* inspect = app.add_subcommand("inspect", "Shape and summary statistics of a tensor file");
  inspect->add_option("--file", ifile, "Tensor file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (augment->parsed()) return cmd_augment(aug);
    if (dssim->parsed()) return cmd_dssim(da, db, dout, dmode, dwindow);
    if (attend->parsed()) return cmd_attend(feat, acfg, ackpt, aseed, bi, sp, pout, basis);
    if (gradcheck->parsed()) return cmd_gradcheck(gcfg, gseed);
    if (train->parsed()) return cmd_train(tr);
    if (metrics->parsed()) return cmd_metrics(scores, threshold);
    if (inspect->parsed()) return cmd_inspect(ifile);
  } catch (const d2f::TrainingError& e) {
    std::cerr << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kAcceptance;
  } catch (const d2f::EvaluationError& e) {
    std::cerr << "error: " << e.what() << " (index " << e.index() << ")\n";
    return kAcceptance;
  } catch (const d2f::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const d2f::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const d2f::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kContract;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
