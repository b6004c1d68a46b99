#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "d2f/error.hpp"

// Frame-level detection metrics. Label 1 is fake (positive), 0 is real.
namespace d2f {

struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;

  void validate() const {
    if (scores.empty() || scores.size() != labels.size())
      throw DomainError("score set needs equal, nonzero numbers of scores and labels");
    for (int l : labels)
      if (l != 0 && l != 1) throw DomainError("labels must be 0 (real) or 1 (fake)");
  }
};

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricsReport {
  double acc = 0, precision = 0, recall = 0, f1 = 0, auc = 0;
  double threshold = 0.5;
};

// Predicts fake iff score >= threshold.
inline ConfusionCounts confusion(const ScoreSet& s, double threshold) {
  s.validate();
  ConfusionCounts c;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    const bool predicted_fake = s.scores[i] >= threshold;
    if (s.labels[i] == 1) (predicted_fake ? c.tp : c.fn)++;
    else (predicted_fake ? c.fp : c.tn)++;
  }
  return c;
}

struct Prf {
  double precision, recall, f1, acc;
};

// 0/0 is taken as 0 throughout.
inline Prf prf_acc(const ConfusionCounts& c) {
  auto ratio = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
  const double p = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  const double r = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  const double f1 = ratio(2.0 * p * r, p + r);
  const double acc = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  return {p, r, f1, acc};
}

// Mann-Whitney statistic in doubled integer units: AUC = doubled / (2 fakes reals).
struct AucCounts {
  std::uint64_t doubled = 0, fakes = 0, reals = 0;
  double value() const {
    return static_cast<double>(doubled) / (2.0 * static_cast<double>(fakes) * static_cast<double>(reals));
  }
};

// P(score_fake > score_real) with ties counted as half.
inline AucCounts auc_counts(const ScoreSet& s) {
  s.validate();
  const std::size_t n = s.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
  std::uint64_t n_fake = 0, n_real = 0;
  for (int l : s.labels) (l == 1 ? n_fake : n_real)++;
  if (n_fake == 0 || n_real == 0) throw DomainError("AUC needs at least one fake and one real sample");

  // For each tie group: fakes beat every real strictly below (2 units each)
  // and tie with the reals inside the group (1 unit each).
  std::uint64_t doubled = 0, reals_below = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::uint64_t fakes = 0, reals = 0;
    while (j < n && s.scores[order[j]] == s.scores[order[i]]) {
      (s.labels[order[j]] == 1 ? fakes : reals)++;
      ++j;
    }
    doubled += fakes * (2 * reals_below + reals);
    reals_below += reals;
    i = j;
  }
  return {doubled, n_fake, n_real};
}

// The exact rational rounded once.
inline double auc(const ScoreSet& s) { return auc_counts(s).value(); }

inline MetricsReport evaluate(const ScoreSet& s, double threshold = 0.5) {
  const auto prf = prf_acc(confusion(s, threshold));
  return {prf.acc, prf.precision, prf.recall, prf.f1, auc(s), threshold};
}

// CSV with header "score,label".
inline ScoreSet read_scores_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open score file: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty score file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "score,label") throw FormatError("score file header must be 'score,label'");
  ScoreSet s;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("line " + std::to_string(lineno) + ": expected score,label");
    try {
      std::size_t used = 0;
      const std::string score_text = line.substr(0, comma);
      const std::string label_text = line.substr(comma + 1);
      const double score = std::stod(score_text, &used);
      if (used != score_text.size()) throw std::invalid_argument("trailing");
      const int label = std::stoi(label_text, &used);
      if (used != label_text.size()) throw std::invalid_argument("trailing");
      s.scores.push_back(score);
      s.labels.push_back(label);
    } catch (const std::logic_error&) {
      throw FormatError("line " + std::to_string(lineno) + ": cannot parse '" + line + "'");
    }
  }
  s.validate();
  return s;
}

}  // namespace d2f
