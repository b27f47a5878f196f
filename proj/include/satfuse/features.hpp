#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "satfuse/colorspace.hpp"
#include "satfuse/dataset.hpp"
#include "satfuse/error.hpp"
#include "satfuse/plane.hpp"

namespace satfuse::features {

// ===========================================================================
// Per-plane statistics
// ===========================================================================

struct PlaneStats {
  double mean = 0.0;
  double std = 0.0;
  double variance = 0.0;  // population (divide by N)
  double moment2 = 0.0;   // raw E[x^2]
};

inline PlaneStats plane_stats(const Plane& plane) {
  require(!plane.empty(), ErrorKind::Argument, "plane_stats of an empty plane");
  const double n = static_cast<double>(plane.size());
  double sum = 0.0, sum_sq = 0.0;
  for (double v : plane.data) {
    sum += v;
    sum_sq += v * v;
  }
  PlaneStats s;
  s.mean = sum / n;
  s.moment2 = sum_sq / n;
  double dev = 0.0;
  for (double v : plane.data) dev += (v - s.mean) * (v - s.mean);
  s.variance = dev / n;
  s.std = std::sqrt(s.variance);
  return s;
}

/// Shape and order statistics that round out the per-plane block of the catalog.
struct PlaneShape {
  double skewness = 0.0;  // 0 for (numerically) constant planes
  double kurtosis = 0.0;  // excess kurtosis, 0 for constant planes
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  double entropy = 0.0;  // Shannon entropy (nats) of the 8-level histogram
};

inline PlaneShape plane_shape(const Plane& plane, const PlaneStats& stats) {
  PlaneShape s;
  const double n = static_cast<double>(plane.size());
  if (stats.std > 1e-12) {
    double m3 = 0.0, m4 = 0.0;
    for (double v : plane.data) {
      const double d = v - stats.mean;
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
    m3 /= n;
    m4 /= n;
    s.skewness = m3 / (stats.variance * stats.std);
    s.kurtosis = m4 / (stats.variance * stats.variance) - 3.0;
  }
  std::vector<double> sorted = plane.data;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  const std::size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

  std::array<double, 8> hist{};
  for (double v : plane.data) hist[std::min(static_cast<int>(std::floor(std::max(v, 0.0) * 8)), 7)] += 1.0;
  for (double h : hist)
    if (h > 0) s.entropy -= (h / n) * std::log(h / n);
  return s;
}

// ===========================================================================
// DCT descriptor
// ===========================================================================

/// Orthonormal 1-D DCT-II basis: basis[k * n + i] = a(k) cos(pi (2i+1) k / 2n).
inline std::vector<double> dct_basis(int n) {
  std::vector<double> basis(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i)
      basis[static_cast<std::size_t>(k) * n + i] = a * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
  }
  return basis;
}

/// Orthonormal 2-D DCT-II computed separably (rows, then columns).
inline Plane dct2(const Plane& plane) {
  const int h = plane.height, w = plane.width;
  const auto bh = dct_basis(h);
  const auto bw = dct_basis(w);
  Plane rows(h, w);
  for (int y = 0; y < h; ++y)
    for (int v = 0; v < w; ++v) {
      double acc = 0.0;
      for (int x = 0; x < w; ++x) acc += bw[static_cast<std::size_t>(v) * w + x] * plane(y, x);
      rows(y, v) = acc;
    }
  Plane out(h, w);
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      double acc = 0.0;
      for (int y = 0; y < h; ++y) acc += bh[static_cast<std::size_t>(u) * h + y] * rows(y, v);
      out(u, v) = acc;
    }
  return out;
}

/// Mean |AC coefficient| of the orthonormal 2-D DCT-II (DC term excluded).
inline double dct_feature(const Plane& plane) {
  require(!plane.empty(), ErrorKind::Argument, "dct_feature of an empty plane");
  if (plane.size() == 1) return 0.0;
  const Plane coeffs = dct2(plane);
  double acc = 0.0;
  for (std::size_t i = 1; i < coeffs.size(); ++i) acc += std::abs(coeffs.data[i]);
  return acc / static_cast<double>(coeffs.size() - 1);
}

// ===========================================================================
// Co-occurrence matrices
// ===========================================================================

inline constexpr int kLevels = 8;

struct Offset {
  int dy;
  int dx;
};

inline constexpr std::array<Offset, 4> kStandardOffsets{{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};

inline LevelGrid quantize(const Plane& plane, int levels) {
  require(levels >= 2, ErrorKind::Argument, "quantize needs at least 2 levels");
  LevelGrid out(plane.height, plane.width);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const double scaled = std::floor(std::max(plane.data[i], 0.0) * levels);
    out.data[i] = static_cast<int>(std::min(scaled, static_cast<double>(levels - 1)));
  }
  return out;
}

struct CooccurrenceMatrix {
  int levels = 0;
  std::vector<Offset> offsets;
  bool symmetric = false;
  std::vector<double> p;  // levels x levels, row-major, sums to 1

  double operator()(int i, int j) const { return p[static_cast<std::size_t>(i) * levels + j]; }
};

/// Pair counts over all in-bounds (y,x) -> (y+dy, x+dx) displacements, summed
/// over `offsets`; the symmetric variant adds the transposed counts.
inline CooccurrenceMatrix cooccurrence(const LevelGrid& grid, int levels, std::span<const Offset> offsets,
                                       bool symmetric) {
  require(!grid.empty(), ErrorKind::Argument, "cooccurrence of an empty grid");
  require(!offsets.empty(), ErrorKind::Argument, "cooccurrence needs at least one offset");
  require(levels >= 1, ErrorKind::Argument, "levels must be positive");
  for (int v : grid.data)
    require(v >= 0 && v < levels, ErrorKind::Argument, "grid level " + std::to_string(v) + " outside [0, L)");

  const auto ll = static_cast<std::size_t>(levels);
  std::vector<std::uint64_t> counts(ll * ll, 0);
  std::uint64_t total = 0;
  for (const auto& off : offsets) {
    const int y0 = std::max(0, -off.dy), y1 = std::min(grid.height, grid.height - off.dy);
    const int x0 = std::max(0, -off.dx), x1 = std::min(grid.width, grid.width - off.dx);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        const auto a = static_cast<std::size_t>(grid(y, x));
        const auto b = static_cast<std::size_t>(grid(y + off.dy, x + off.dx));
        ++counts[a * ll + b];
        ++total;
        if (symmetric) {
          ++counts[b * ll + a];
          ++total;
        }
      }
  }
  require(total > 0, ErrorKind::Degenerate, "no in-bounds pixel pair for any offset");

  CooccurrenceMatrix m{levels, {offsets.begin(), offsets.end()}, symmetric, std::vector<double>(ll * ll)};
  for (std::size_t i = 0; i < counts.size(); ++i) m.p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return m;
}

// ===========================================================================
// Haralick statistics
// ===========================================================================

struct Haralick {
  // Core set.
  double glcm_mean = 0.0;
  double autoc = 0.0;
  double contrast = 0.0;
  double correlation = 0.0;
  double covariance = 0.0;
  double energy = 0.0;  // angular second moment, a.k.a. CCM "2nd moment"
  double entropy = 0.0;
  double homogeneity = 0.0;
  double maxprob = 0.0;
  double sosvh = 0.0;
  double variance = 0.0;
  // Extended set.
  double dissimilarity = 0.0;
  double idm = 0.0;
  double sum_average = 0.0;
  double sum_entropy = 0.0;
  double diff_average = 0.0;
  double diff_variance = 0.0;
  double diff_entropy = 0.0;
  double cluster_shade = 0.0;
  double cluster_prominence = 0.0;
  double info_corr1 = 0.0;
  double info_corr2 = 0.0;
  double idn = 0.0;
  double idmn = 0.0;
  double glcm_std = 0.0;
};

namespace detail {
inline double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }
}  // namespace detail

inline Haralick haralick(const CooccurrenceMatrix& m) {
  const int L = m.levels;
  require(L >= 1 && m.p.size() == static_cast<std::size_t>(L) * L, ErrorKind::Contract, "malformed co-occurrence matrix");
  double total = 0.0;
  for (double v : m.p) {
    require(v >= 0.0, ErrorKind::Contract, "co-occurrence matrix has a negative entry");
    total += v;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorKind::Contract, "co-occurrence matrix is not normalized");

  std::vector<double> px(L, 0.0), py(L, 0.0), psum(2 * L - 1, 0.0), pdiff(L, 0.0);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      const double v = m(i, j);
      px[i] += v;
      py[j] += v;
      psum[i + j] += v;
      pdiff[std::abs(i - j)] += v;
    }

  double mu_x = 0.0, mu_y = 0.0;
  for (int i = 0; i < L; ++i) {
    mu_x += i * px[i];
    mu_y += i * py[i];
  }
  double var_x = 0.0, var_y = 0.0;
  for (int i = 0; i < L; ++i) {
    var_x += (i - mu_x) * (i - mu_x) * px[i];
    var_y += (i - mu_y) * (i - mu_y) * py[i];
  }
  const double sd_x = std::sqrt(var_x), sd_y = std::sqrt(var_y);

  Haralick h;
  h.glcm_mean = mu_x;
  h.glcm_std = sd_x;
  const double l2 = static_cast<double>(L) * L;
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      const double v = m(i, j);
      const double d = i - j;
      const double ad = std::abs(d);
      h.autoc += i * j * v;
      h.contrast += d * d * v;
      h.energy += v * v;
      h.entropy -= detail::xlogx(v);
      h.homogeneity += v / (1.0 + ad);
      h.maxprob = std::max(h.maxprob, v);
      h.variance += (i - mu_x) * (i - mu_x) * v;
      h.dissimilarity += ad * v;
      h.idm += v / (1.0 + d * d);
      h.idn += v / (1.0 + ad / L);
      h.idmn += v / (1.0 + d * d / l2);
      const double s = i + j - mu_x - mu_y;
      h.cluster_shade += s * s * s * v;
      h.cluster_prominence += s * s * s * s * v;
    }
  h.covariance = h.autoc - mu_x * mu_y;
  h.correlation = (sd_x > 0.0 && sd_y > 0.0) ? h.covariance / (sd_x * sd_y) : 0.0;

  for (std::size_t k = 0; k < psum.size(); ++k) {
    h.sum_average += static_cast<double>(k) * psum[k];
    h.sum_entropy -= detail::xlogx(psum[k]);
  }
  for (std::size_t k = 0; k < psum.size(); ++k)
    h.sosvh += (static_cast<double>(k) - h.sum_average) * (static_cast<double>(k) - h.sum_average) * psum[k];

  for (int k = 0; k < L; ++k) {
    h.diff_average += k * pdiff[k];
    h.diff_entropy -= detail::xlogx(pdiff[k]);
  }
  for (int k = 0; k < L; ++k) h.diff_variance += (k - h.diff_average) * (k - h.diff_average) * pdiff[k];

  // Information measures of correlation.
  double hx = 0.0, hy = 0.0, hxy1 = 0.0, hxy2 = 0.0;
  for (int i = 0; i < L; ++i) {
    hx -= detail::xlogx(px[i]);
    hy -= detail::xlogx(py[i]);
  }
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      const double q = px[i] * py[j];
      if (q <= 0.0) continue;
      hxy1 -= m(i, j) * std::log(q);
      hxy2 -= q * std::log(q);
    }
  const double hmax = std::max(hx, hy);
  h.info_corr1 = hmax > 0.0 ? (h.entropy - hxy1) / hmax : 0.0;
  h.info_corr2 = std::sqrt(std::max(0.0, 1.0 - std::exp(-2.0 * (hxy2 - h.entropy))));
  return h;
}

// ===========================================================================
// Vegetation indices
// ===========================================================================

struct VegetationIndices {
  double ndvi = 0.0;
  double evi = 0.0;
  double arvi = 0.0;
  double sr = 0.0;
  double savi = 0.0;
  double gndvi = 0.0;
};

/// Per-pixel indices averaged over the patch. A pixel whose denominator is
/// exactly zero contributes 0; SR floors the red band at 1/255.
inline VegetationIndices vegetation_indices(PatchView patch) {
  require(patch.channels >= kChannels, ErrorKind::Argument, "vegetation indices need R, G, B, NIR");
  auto ratio = [](double num, double den) { return den != 0.0 ? num / den : 0.0; };
  VegetationIndices vi;
  const int n = patch.height * patch.width;
  for (int y = 0; y < patch.height; ++y)
    for (int x = 0; x < patch.width; ++x) {
      const double r = patch.at(y, x, kRed) / 255.0;
      const double g = patch.at(y, x, kGreen) / 255.0;
      const double b = patch.at(y, x, kBlue) / 255.0;
      const double nir = patch.at(y, x, kNir) / 255.0;
      const double rb = 2.0 * r - b;
      vi.ndvi += ratio(nir - r, nir + r);
      vi.sr += nir / std::max(r, 1.0 / 255.0);
      vi.arvi += ratio(nir - rb, nir + rb);
      vi.evi += ratio(2.5 * (nir - r), nir + 6.0 * r - 7.5 * b + 1.0);
      vi.savi += ratio(1.5 * (nir - r), nir + r + 0.5);
      vi.gndvi += ratio(nir - g, nir + g);
    }
  for (double* v : {&vi.ndvi, &vi.evi, &vi.arvi, &vi.sr, &vi.savi, &vi.gndvi}) *v /= n;
  return vi;
}

// ===========================================================================
// Feature catalog
//
// 150 entries: for each channel H, S, I, NIR (in that order) 11 plane
// statistics then 25 co-occurrence statistics, followed by 6 vegetation
// indices. docs/feature_catalog.md lists every entry.
// ===========================================================================

inline constexpr int kCatalogVersion = 1;
inline constexpr std::size_t kCatalogSize = 150;
inline constexpr std::size_t kSelectedSize = 22;

inline constexpr std::array<std::string_view, 4> kFeatureChannels{"H", "S", "I", "NIR"};
inline constexpr std::array<std::string_view, 11> kPlaneStats{
    "mean", "std", "variance", "moment2", "dct", "skewness", "kurtosis", "min", "max", "median", "entropy"};
inline constexpr std::array<std::string_view, 25> kCcmStats{
    "mean",          "autoc",         "contrast",     "correlation",   "covariance",    "moment2",
    "entropy",       "homogeneity",   "maxprob",      "sosvh",         "variance",      "dissimilarity",
    "idm",           "sum_average",   "sum_entropy",  "diff_average",  "diff_variance", "diff_entropy",
    "cluster_shade", "cluster_prominence", "info_corr1", "info_corr2", "idn",           "idmn",
    "std"};
inline constexpr std::array<std::string_view, 6> kIndexNames{"NDVI", "EVI", "ARVI", "SR", "SAVI", "GNDVI"};

inline const std::vector<std::string>& catalog() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (auto ch : kFeatureChannels) {
      for (auto s : kPlaneStats) out.push_back(std::string(ch) + ".plane." + std::string(s));
      for (auto s : kCcmStats) out.push_back(std::string(ch) + ".ccm." + std::string(s));
    }
    for (auto s : kIndexNames) out.emplace_back(s);
    return out;
  }();
  return names;
}

/// The 22 ranked features, in rank order.
inline const std::vector<std::string>& selected_names() {
  static const std::vector<std::string> names{
      "I.ccm.mean",     "H.ccm.sosvh",      "H.ccm.autoc",    "S.ccm.mean",   "H.ccm.mean",   "SR",
      "S.ccm.moment2",  "I.ccm.moment2",    "I.plane.moment2", "I.plane.variance", "NIR.plane.std", "I.plane.std",
      "H.plane.std",    "H.plane.mean",     "I.plane.mean",   "S.plane.mean", "I.ccm.covariance", "NIR.plane.mean",
      "ARVI",           "NDVI",             "I.plane.dct",    "EVI"};
  return names;
}

inline std::size_t catalog_index(std::string_view name) {
  const auto& names = catalog();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw Error(ErrorKind::Config, "feature '" + std::string(name) + "' is not in the catalog");
}

struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return values[i];
    throw Error(ErrorKind::Config, "feature '" + std::string(name) + "' not present");
  }
};

namespace detail {

inline void append_plane_block(std::vector<double>& out, const Plane& plane) {
  const auto st = plane_stats(plane);
  const auto sh = plane_shape(plane, st);
  out.insert(out.end(), {st.mean, st.std, st.variance, st.moment2, dct_feature(plane), sh.skewness, sh.kurtosis,
                         sh.min, sh.max, sh.median, sh.entropy});
}

inline void append_ccm_block(std::vector<double>& out, const Plane& plane) {
  const auto grid = quantize(plane, kLevels);
  const auto h = haralick(cooccurrence(grid, kLevels, kStandardOffsets, true));
  out.insert(out.end(), {h.glcm_mean,     h.autoc,         h.contrast,      h.correlation,  h.covariance,
                         h.energy,        h.entropy,       h.homogeneity,   h.maxprob,      h.sosvh,
                         h.variance,      h.dissimilarity, h.idm,           h.sum_average,  h.sum_entropy,
                         h.diff_average,  h.diff_variance, h.diff_entropy,  h.cluster_shade, h.cluster_prominence,
                         h.info_corr1,    h.info_corr2,    h.idn,           h.idmn,         h.glcm_std});
}

}  // namespace detail

/// Values of the full catalog, in catalog order.
inline std::vector<double> extract_values(PatchView patch) {
  require(patch.channels == kChannels, ErrorKind::Argument, "feature extraction needs 4-channel patches");
  require(patch.height > 1 || patch.width > 1, ErrorKind::Argument, "patch too small for co-occurrence");
  const auto hsi = rgb_to_hsi(unit_plane(patch, kRed), unit_plane(patch, kGreen), unit_plane(patch, kBlue));
  const Plane nir = unit_plane(patch, kNir);

  std::vector<double> out;
  out.reserve(kCatalogSize);
  for (const Plane* plane : {&hsi.hue, &hsi.saturation, &hsi.intensity, &nir}) {
    detail::append_plane_block(out, *plane);
    detail::append_ccm_block(out, *plane);
  }
  const auto vi = vegetation_indices(patch);
  out.insert(out.end(), {vi.ndvi, vi.evi, vi.arvi, vi.sr, vi.savi, vi.gndvi});
  return out;
}

inline FeatureVector extract_all(PatchView patch) { return {catalog(), extract_values(patch)}; }

/// Projection onto an ordered list of catalog names.
inline FeatureVector project(const FeatureVector& full, const std::vector<std::string>& names) {
  FeatureVector out;
  out.names = names;
  out.values.reserve(names.size());
  for (const auto& n : names) {
    std::size_t idx = full.names.size();
    for (std::size_t i = 0; i < full.names.size(); ++i)
      if (full.names[i] == n) {
        idx = i;
        break;
      }
    if (idx == full.names.size()) throw Error(ErrorKind::Config, "feature '" + n + "' missing from input vector");
    out.values.push_back(full.values[idx]);
  }
  return out;
}

inline FeatureVector select22(const FeatureVector& full) { return project(full, selected_names()); }

/// Catalog positions of `names`, in order.
inline std::vector<std::size_t> catalog_indices(std::span<const std::string> names) {
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const auto& n : names) idx.push_back(catalog_index(n));
  return idx;
}

/// One row per patch holding the catalog entries at `columns`. Patches are
/// split into contiguous blocks over `threads` workers; each row depends only
/// on its own patch, so the result does not depend on the thread count.
inline std::vector<std::vector<double>> extract_rows(const LabeledSet& set, std::span<const std::size_t> columns,
                                                     int threads = 1) {
  require(threads >= 1, ErrorKind::Argument, "threads must be >= 1");
  require(set.channels() == kChannels, ErrorKind::Argument, "feature extraction needs 4-channel patches");
  require(set.height() > 1 || set.width() > 1, ErrorKind::Argument, "patch too small for co-occurrence");
  for (auto c : columns) require(c < kCatalogSize, ErrorKind::Argument, "catalog column out of range");
  std::vector<std::vector<double>> rows(set.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto all = extract_values(set.patch(i));
      auto& r = rows[i];
      r.reserve(columns.size());
      for (auto c : columns) r.push_back(all[c]);
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), std::max<std::size_t>(set.size(), 1));
  if (workers <= 1) {
    work(0, set.size());
    return rows;
  }
  std::vector<std::thread> pool;
  const std::size_t block = (set.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * block, end = std::min(set.size(), begin + block);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  for (auto& t : pool) t.join();
  return rows;
}

// ===========================================================================
// Feature scaling
// ===========================================================================

struct FeatureScaler {
  std::vector<double> shift;
  std::vector<double> scale;

  static constexpr double kScaleFloor = 1e-8;

  /// z-score parameters from training rows only (population std, floored).
  static FeatureScaler fit(std::span<const std::vector<double>> rows) {
    require(rows.size() >= 2, ErrorKind::Argument, "scaler needs at least 2 training vectors");
    const std::size_t d = rows.front().size();
    FeatureScaler s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (const auto& r : rows) {
      require(r.size() == d, ErrorKind::Argument, "ragged feature rows");
      for (std::size_t j = 0; j < d; ++j) s.shift[j] += r[j];
    }
    const double n = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < d; ++j) {
      s.shift[j] /= n;
      // A constant column keeps its exact value as shift so it maps to exactly 0.
      bool constant = true;
      for (const auto& r : rows) constant = constant && r[j] == rows.front()[j];
      if (constant) s.shift[j] = rows.front()[j];
    }
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) s.scale[j] += (r[j] - s.shift[j]) * (r[j] - s.shift[j]);
    for (auto& v : s.scale) v = std::max(std::sqrt(v / n), kScaleFloor);
    return s;
  }

  std::vector<double> apply(std::span<const double> row) const {
    require(row.size() == shift.size(), ErrorKind::Argument, "feature width does not match the scaler");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - shift[j]) / scale[j];
    return out;
  }
};

}  // namespace satfuse::features
