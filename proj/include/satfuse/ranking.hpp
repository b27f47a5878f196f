#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "satfuse/dataset.hpp"
#include "satfuse/error.hpp"

namespace satfuse::ranking {

struct ClassStat {
  double mean = 0.0;
  double std = 0.0;
};

/// Min-max normalizes `values` to [0,1] over the whole sample (a constant
/// column maps to 0), then returns the population mean/std of each class.
inline std::vector<ClassStat> class_stats(std::span<const double> values, std::span<const int> labels, int num_classes) {
  require(values.size() == labels.size(), ErrorKind::Argument, "values and labels differ in length");
  require(num_classes >= 1, ErrorKind::Argument, "need at least one class");
  require(!values.empty(), ErrorKind::Degenerate, "no samples");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  auto norm = [&](double v) { return range > 0.0 ? (v - lo) / range : 0.0; };

  std::vector<double> sum(num_classes, 0.0);
  std::vector<std::size_t> count(num_classes, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes, ErrorKind::Label, "label out of range");
    sum[labels[i]] += norm(values[i]);
    ++count[labels[i]];
  }
  std::vector<ClassStat> out(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    require(count[c] > 0, ErrorKind::Degenerate, "class " + std::to_string(c) + " has no samples");
    out[c].mean = sum[c] / static_cast<double>(count[c]);
  }
  std::vector<double> dev(num_classes, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = norm(values[i]) - out[labels[i]].mean;
    dev[labels[i]] += d * d;
  }
  for (int c = 0; c < num_classes; ++c) out[c].std = std::sqrt(dev[c] / static_cast<double>(count[c]));
  return out;
}

struct Separability {
  double delta_mean = 0.0;   // mean |mu_c - mu_c'| over unordered class pairs
  double delta_sigma = 0.0;  // mean of class standard deviations
  double d_s = 0.0;          // ratio; +inf when only the denominator vanishes
};

inline Separability separability(std::span<const ClassStat> stats) {
  const auto k = stats.size();
  require(k >= 2, ErrorKind::Argument, "separability needs at least two classes");
  Separability s;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      s.delta_mean += std::abs(stats[a].mean - stats[b].mean);
      ++pairs;
    }
  s.delta_mean /= static_cast<double>(pairs);
  for (const auto& st : stats) s.delta_sigma += st.std;
  s.delta_sigma /= static_cast<double>(k);
  if (s.delta_sigma > 0.0)
    s.d_s = s.delta_mean / s.delta_sigma;
  else
    s.d_s = s.delta_mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return s;
}

struct RankingEntry {
  std::string feature;
  double delta_mean = 0.0;
  double delta_sigma = 0.0;
  double d_s = 0.0;
};

struct RankingTable {
  std::vector<RankingEntry> entries;  // d_s descending, ties by feature name
  double threshold = 0.3;

  bool selected(const RankingEntry& e) const { return e.d_s >= threshold; }

  std::vector<std::string> selected_features() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (selected(e)) out.push_back(e.feature);
    return out;
  }
};

inline constexpr double kDefaultThreshold = 0.3;

/// Column-major feature matrix: `columns[f][i]` is feature f of sample i.
inline RankingTable rank_features(std::span<const std::vector<double>> columns, std::span<const std::string> names,
                                  std::span<const int> labels, int num_classes, double threshold = kDefaultThreshold) {
  require(!columns.empty(), ErrorKind::Argument, "no features to rank");
  require(columns.size() == names.size(), ErrorKind::Argument, "feature names do not match columns");
  require(threshold >= 0.0, ErrorKind::Argument, "threshold must be non-negative");

  RankingTable table;
  table.threshold = threshold;
  table.entries.reserve(columns.size());
  for (std::size_t f = 0; f < columns.size(); ++f) {
    const auto stats = class_stats(columns[f], labels, num_classes);
    const auto s = separability(stats);
    table.entries.push_back({names[f], s.delta_mean, s.delta_sigma, s.d_s});
  }
  std::sort(table.entries.begin(), table.entries.end(), [](const RankingEntry& a, const RankingEntry& b) {
    if (a.d_s != b.d_s) return a.d_s > b.d_s;
    return a.feature < b.feature;
  });
  return table;
}

/// Table-2 statistic over a set of features: per-feature (delta_mean, delta_sigma) averaged.
inline Separability feature_separability(std::span<const std::vector<double>> columns, std::span<const int> labels,
                                         int num_classes) {
  require(!columns.empty(), ErrorKind::Argument, "no features");
  Separability out;
  for (const auto& col : columns) {
    const auto s = separability(class_stats(col, labels, num_classes));
    out.delta_mean += s.delta_mean;
    out.delta_sigma += s.delta_sigma;
  }
  out.delta_mean /= static_cast<double>(columns.size());
  out.delta_sigma /= static_cast<double>(columns.size());
  out.d_s = out.delta_sigma > 0.0 ? out.delta_mean / out.delta_sigma : 0.0;
  return out;
}

/// Table-2 statistic over raw pixels. Each patch's unit-scaled pixel vector is
/// one observation. delta_mean averages, over class pairs, the RMS
/// per-dimension distance ||mu_c - mu_c'||_2 / sqrt(D); delta_sigma is the
/// grand mean of per-class per-dimension standard deviations.
inline Separability raw_separability(const LabeledSet& set) {
  const int k = set.num_classes();
  require(k >= 2, ErrorKind::Degenerate, "raw separability needs at least two classes");
  const std::size_t dim = set.patch_bytes();
  std::vector<std::vector<double>> sum(k, std::vector<double>(dim, 0.0)), sum_sq = sum;
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const int c = set.label(i);
    const auto px = set.patch(i).pixels;
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = px[d] / 255.0;
      sum[c][d] += v;
      sum_sq[c][d] += v * v;
    }
    ++count[c];
  }
  for (int c = 0; c < k; ++c)
    require(count[c] > 0, ErrorKind::Degenerate, "class " + std::to_string(c) + " has no samples");

  Separability out;
  double std_total = 0.0;
  for (int c = 0; c < k; ++c) {
    const double n = static_cast<double>(count[c]);
    for (std::size_t d = 0; d < dim; ++d) {
      sum[c][d] /= n;  // now the class mean
      std_total += std::sqrt(std::max(sum_sq[c][d] / n - sum[c][d] * sum[c][d], 0.0));
    }
  }
  out.delta_sigma = std_total / (static_cast<double>(k) * static_cast<double>(dim));
  std::size_t pairs = 0;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      double sq = 0.0;
      for (std::size_t d = 0; d < dim; ++d) sq += (sum[a][d] - sum[b][d]) * (sum[a][d] - sum[b][d]);
      out.delta_mean += std::sqrt(sq / static_cast<double>(dim));
      ++pairs;
    }
  out.delta_mean /= static_cast<double>(pairs);
  out.d_s = out.delta_sigma > 0.0 ? out.delta_mean / out.delta_sigma : 0.0;
  return out;
}

/// Spearman rank correlation between two orderings of the same items
/// (both given as rank positions, no ties).
inline double spearman(std::span<const double> rank_a, std::span<const double> rank_b) {
  require(rank_a.size() == rank_b.size() && rank_a.size() >= 2, ErrorKind::Argument, "spearman needs equal, >=2 ranks");
  const double n = static_cast<double>(rank_a.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < rank_a.size(); ++i) d2 += (rank_a[i] - rank_b[i]) * (rank_a[i] - rank_b[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace satfuse::ranking
