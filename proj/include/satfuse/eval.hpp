#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "satfuse/error.hpp"

namespace satfuse::eval {

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  require(predictions.size() == labels.size(), ErrorKind::Argument, "predictions and labels differ in length");
  require(!labels.empty(), ErrorKind::Argument, "accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

/// counts[true][predicted].
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t operator()(int truth, int predicted) const {
    return counts[static_cast<std::size_t>(truth) * num_classes + predicted];
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  double accuracy() const {
    std::uint64_t trace = 0;
    for (int k = 0; k < num_classes; ++k) trace += (*this)(k, k);
    const auto t = total();
    return t ? static_cast<double>(trace) / static_cast<double>(t) : 0.0;
  }
};

inline ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
  require(predictions.size() == labels.size(), ErrorKind::Argument, "predictions and labels differ in length");
  require(num_classes >= 1, ErrorKind::Argument, "need at least one class");
  ConfusionMatrix m{num_classes, std::vector<std::uint64_t>(static_cast<std::size_t>(num_classes) * num_classes, 0)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes, ErrorKind::Argument, "label out of range");
    require(predictions[i] >= 0 && predictions[i] < num_classes, ErrorKind::Argument, "prediction out of range");
    ++m.counts[static_cast<std::size_t>(labels[i]) * num_classes + predictions[i]];
  }
  return m;
}

/// Upper tail of the chi-square distribution with one degree of freedom:
/// P(X > x) = erfc(sqrt(x / 2)).
inline double chi2_sf_1dof(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(0.5 * x));
}

inline constexpr double kPValueReportFloor = 2.2e-16;

struct McNemarResult {
  std::uint64_t b = 0;  // A correct, B wrong
  std::uint64_t c = 0;  // A wrong, B correct
  double chi2 = 0.0;
  double p_two_tailed = 1.0;

  /// "< 2.2e-16" below the conventional reporting floor, else the value.
  std::string p_text() const {
    if (p_two_tailed < kPValueReportFloor) return "< 2.2e-16";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", p_two_tailed);
    return buf;
  }
};

inline McNemarResult mcnemar(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> labels,
                             bool continuity_correction = true) {
  require(preds_a.size() == labels.size() && preds_b.size() == labels.size(), ErrorKind::Argument,
          "prediction vectors and labels differ in length");
  McNemarResult r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool a_ok = preds_a[i] == labels[i];
    const bool b_ok = preds_b[i] == labels[i];
    r.b += a_ok && !b_ok;
    r.c += !a_ok && b_ok;
  }
  const double n = static_cast<double>(r.b + r.c);
  if (n == 0.0) return r;
  double diff = std::abs(static_cast<double>(r.b) - static_cast<double>(r.c));
  if (continuity_correction) diff -= 1.0;  // squared below, same as R's mcnemar.test
  r.chi2 = diff * diff / n;
  r.p_two_tailed = chi2_sf_1dof(r.chi2);
  return r;
}

}  // namespace satfuse::eval
