#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "satfuse/dataset.hpp"
#include "satfuse/ranking.hpp"
#include "satfuse/rng.hpp"

using namespace satfuse;
using namespace satfuse::ranking;

namespace {

std::vector<ClassStat> stats(std::initializer_list<std::pair<double, double>> ms) {
  std::vector<ClassStat> out;
  for (auto [m, s] : ms) out.push_back({m, s});
  return out;
}

struct Gaussians {
  std::vector<double> values;
  std::vector<int> labels;
};

Gaussians two_gaussians(double m, std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  Gaussians g;
  for (std::size_t i = 0; i < per_class; ++i) {
    g.values.push_back(rng.normal());
    g.labels.push_back(0);
    g.values.push_back(m + rng.normal());
    g.labels.push_back(1);
  }
  return g;
}

}  // namespace

TEST(ClassStats, NormalizedExample) {
  const std::vector<double> v{0, 2, 4, 10};
  const std::vector<int> l{0, 0, 1, 1};
  const auto s = class_stats(v, l, 2);
  EXPECT_DOUBLE_EQ(s[0].mean, 0.1);
  EXPECT_DOUBLE_EQ(s[0].std, 0.1);
  EXPECT_DOUBLE_EQ(s[1].mean, 0.7);
  EXPECT_DOUBLE_EQ(s[1].std, 0.3);
}

TEST(ClassStats, ConstantColumnMapsToZero) {
  const std::vector<double> v{3, 3, 3};
  const std::vector<int> l{0, 1, 1};
  for (const auto& s : class_stats(v, l, 2)) {
    EXPECT_EQ(s.mean, 0.0);
    EXPECT_EQ(s.std, 0.0);
  }
}

TEST(ClassStats, Errors) {
  const std::vector<double> v{1, 2};
  EXPECT_THROW(class_stats(v, std::vector<int>{0}, 2), Error);
  EXPECT_THROW(class_stats(v, std::vector<int>{0, 2}, 2), Error);
  try {
    class_stats(v, std::vector<int>{0, 0}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
  }
}

TEST(ClassStats, MonteCarloMatchesMoments) {
  const auto g = two_gaussians(3.0, 50000, 7);
  const auto s = class_stats(g.values, g.labels, 2);
  const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
  const double range = *hi - *lo;
  EXPECT_NEAR(s[0].std * range, 1.0, 0.02);
  EXPECT_NEAR(s[1].std * range, 1.0, 0.02);
  EXPECT_NEAR((s[1].mean - s[0].mean) * range, 3.0, 0.03);
}

TEST(Separability, Examples) {
  const auto a = separability(stats({{0.2, 0.1}, {0.6, 0.3}}));
  EXPECT_DOUBLE_EQ(a.delta_mean, 0.4);
  EXPECT_DOUBLE_EQ(a.delta_sigma, 0.2);
  EXPECT_DOUBLE_EQ(a.d_s, 2.0);
  const auto b = separability(stats({{0.0, 0.1}, {0.3, 0.1}, {0.9, 0.4}}));
  EXPECT_DOUBLE_EQ(b.delta_mean, (0.3 + 0.9 + 0.6) / 3);
  EXPECT_DOUBLE_EQ(b.delta_sigma, 0.2);
}

TEST(Separability, ZeroSpreadSentinels) {
  EXPECT_EQ(separability(stats({{0.0, 0.0}, {1.0, 0.0}})).d_s, std::numeric_limits<double>::infinity());
  EXPECT_EQ(separability(stats({{0.5, 0.0}, {0.5, 0.0}})).d_s, 0.0);
  EXPECT_THROW(separability(stats({{0.5, 0.1}})), Error);
}

TEST(Separability, InvariantUnderPositiveAffineMaps) {
  Rng rng(12);
  std::vector<double> v(300);
  std::vector<int> l(300);
  for (std::size_t i = 0; i < v.size(); ++i) {
    l[i] = static_cast<int>(i % 3);
    v[i] = l[i] * 0.7 + rng.normal();
  }
  const auto base = separability(class_stats(v, l, 3));
  for (auto [a, b] : {std::pair{2.0, 5.0}, {0.5, -3.0}, {4.0, 0.0}}) {
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = a * v[i] + b;
    EXPECT_NEAR(separability(class_stats(w, l, 3)).d_s, base.d_s, 1e-12 * base.d_s);
  }
}

TEST(Separability, InvariantUnderClassRelabeling) {
  Rng rng(2);
  std::vector<double> v(200);
  std::vector<int> l(200), relabeled(200);
  const int perm[4] = {2, 0, 3, 1};
  for (std::size_t i = 0; i < v.size(); ++i) {
    l[i] = static_cast<int>(i % 4);
    relabeled[i] = perm[l[i]];
    v[i] = l[i] * l[i] * 0.3 + rng.normal();
  }
  EXPECT_NEAR(separability(class_stats(v, l, 4)).d_s, separability(class_stats(v, relabeled, 4)).d_s, 1e-12);
}

TEST(Separability, GaussianPairsRecoverShift) {
  for (double m : {0.5, 1.0, 2.0}) {
    const auto g = two_gaussians(m, 100000, static_cast<std::uint64_t>(m * 100));
    const double ds = separability(class_stats(g.values, g.labels, 2)).d_s;
    EXPECT_NEAR(ds, m, 0.05 * m) << "m=" << m;
  }
}

TEST(Rank, OrderThresholdAndTies) {
  // Feature "b" separates perfectly, "a" and "c" are identical copies.
  std::vector<int> l{0, 0, 1, 1};
  std::vector<std::vector<double>> cols{{0, 1, 0, 1}, {0, 0, 1, 1}, {0, 1, 0, 1}, {0, 0.1, 0.9, 1}};
  std::vector<std::string> names{"c", "b", "a", "d"};
  const auto t = rank_features(cols, names, l, 2, 0.3);
  ASSERT_EQ(t.entries.size(), 4u);
  EXPECT_EQ(t.entries[0].feature, "b");
  EXPECT_EQ(t.entries[1].feature, "d");
  EXPECT_EQ(t.entries[2].feature, "a");
  EXPECT_EQ(t.entries[3].feature, "c");
  EXPECT_EQ(t.selected_features(), (std::vector<std::string>{"b", "d"}));
}

TEST(Rank, ThresholdSelectsAboveOnly) {
  // d_s is 8 for "x" and 0.1 for "y".
  std::vector<int> l{0, 0, 1, 1};
  std::vector<std::vector<double>> cols{{0.0, 0.2, 0.8, 1.0}, {0.0, 0.8, 0.04, 0.84}};
  std::vector<std::string> names{"x", "y"};
  const auto t = rank_features(cols, names, l, 2, 0.3);
  EXPECT_NEAR(t.entries[0].d_s, 8.0, 1e-12);
  EXPECT_NEAR(t.entries[1].d_s, 0.1, 1e-12);
  EXPECT_EQ(t.selected_features(), (std::vector<std::string>{"x"}));
  EXPECT_THROW(rank_features(cols, names, l, 2, -1.0), Error);
}

TEST(Rank, PermutingColumnsGivesSameTable) {
  Rng rng(9);
  std::vector<int> l(60);
  std::vector<std::vector<double>> cols(5, std::vector<double>(60));
  for (std::size_t i = 0; i < 60; ++i) {
    l[i] = static_cast<int>(i % 3);
    for (std::size_t f = 0; f < 5; ++f) cols[f][i] = f * 0.2 * l[i] + rng.normal();
  }
  std::vector<std::string> names{"f0", "f1", "f2", "f3", "f4"};
  const auto t1 = rank_features(cols, names, l, 3);
  std::vector<std::vector<double>> pc{cols[3], cols[0], cols[4], cols[2], cols[1]};
  std::vector<std::string> pn{"f3", "f0", "f4", "f2", "f1"};
  const auto t2 = rank_features(pc, pn, l, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(t1.entries[i].feature, t2.entries[i].feature);
    EXPECT_EQ(t1.entries[i].d_s, t2.entries[i].d_s);
  }
}

TEST(RawSeparability, IdenticalClassesHaveNoMeanGap) {
  LabeledSet set(2);
  ImagePatch a, b;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) a.pixels[i] = static_cast<std::uint8_t>(i % 200);
  for (std::size_t i = 0; i < b.pixels.size(); ++i) b.pixels[i] = static_cast<std::uint8_t>((i * 7) % 250);
  for (int c = 0; c < 2; ++c) {
    set.add(a.view(), c);
    set.add(b.view(), c);
  }
  const auto s = raw_separability(set);
  EXPECT_NEAR(s.delta_mean, 0.0, 1e-15);
  EXPECT_GT(s.delta_sigma, 0.0);
}

TEST(RawSeparability, ConstantShift) {
  // Every pixel of class 1 is 51 levels above class 0, both without spread.
  LabeledSet set(2);
  ImagePatch lo, hi;
  std::fill(lo.pixels.begin(), lo.pixels.end(), 0);
  std::fill(hi.pixels.begin(), hi.pixels.end(), 51);
  set.add(lo.view(), 0);
  set.add(hi.view(), 1);
  const auto s = raw_separability(set);
  EXPECT_NEAR(s.delta_mean, 0.2, 1e-12);
  EXPECT_NEAR(s.delta_sigma, 0.0, 1e-7);
}

TEST(Spearman, Examples) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(a, a), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, rev), -1.0);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), Error);
}
