#include <gtest/gtest.h>

#include "satfuse/eval.hpp"

using namespace satfuse;
using namespace satfuse::eval;

namespace {

// Builds paired predictions with b cases only A gets right and c only B gets right.
struct Pairs {
  std::vector<int> a, b, labels;
};

Pairs discordant(int b, int c, int both_right = 5, int both_wrong = 3) {
  Pairs p;
  auto push = [&](int pa, int pb) {
    p.a.push_back(pa);
    p.b.push_back(pb);
    p.labels.push_back(0);
  };
  for (int i = 0; i < b; ++i) push(0, 1);
  for (int i = 0; i < c; ++i) push(1, 0);
  for (int i = 0; i < both_right; ++i) push(0, 0);
  for (int i = 0; i < both_wrong; ++i) push(1, 1);
  return p;
}

}  // namespace

TEST(Accuracy, Examples) {
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 1, 2, 3}, std::vector<int>{0, 1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 1, 1, 0}, std::vector<int>{0, 1, 2, 3}), 0.5);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), Error);
  EXPECT_THROW(accuracy(std::vector<int>{0}, std::vector<int>{0, 1}), Error);
}

TEST(Confusion, CountsAndTrace) {
  const std::vector<int> pred{0, 1, 1, 2, 0};
  const std::vector<int> truth{0, 1, 2, 2, 1};
  const auto m = confusion(pred, truth, 3);
  EXPECT_EQ(m(0, 0), 1u);
  EXPECT_EQ(m(1, 1), 1u);
  EXPECT_EQ(m(1, 0), 1u);
  EXPECT_EQ(m(2, 1), 1u);
  EXPECT_EQ(m(2, 2), 1u);
  EXPECT_EQ(m.total(), 5u);
  EXPECT_DOUBLE_EQ(m.accuracy(), accuracy(pred, truth));
  EXPECT_THROW(confusion(pred, std::vector<int>{0, 1, 2, 3, 0}, 3), Error);
}

TEST(McNemar, CorrectedStatistic) {
  const auto p = discordant(10, 2);
  const auto r = mcnemar(p.a, p.b, p.labels);
  EXPECT_EQ(r.b, 10u);
  EXPECT_EQ(r.c, 2u);
  EXPECT_NEAR(r.chi2, 49.0 / 12.0, 1e-12);
  EXPECT_NEAR(r.p_two_tailed, 0.04330814, 1e-7);
  const auto raw = mcnemar(p.a, p.b, p.labels, false);
  EXPECT_NEAR(raw.chi2, 64.0 / 12.0, 1e-12);
}

TEST(McNemar, SymmetricInClassifierOrder) {
  const auto p = discordant(7, 19);
  const auto ab = mcnemar(p.a, p.b, p.labels), ba = mcnemar(p.b, p.a, p.labels);
  EXPECT_EQ(ab.b, ba.c);
  EXPECT_EQ(ab.chi2, ba.chi2);
  EXPECT_EQ(ab.p_two_tailed, ba.p_two_tailed);
}

TEST(McNemar, NoDiscordanceMeansNoEvidence) {
  const auto p = discordant(0, 0);
  const auto r = mcnemar(p.a, p.b, p.labels);
  EXPECT_EQ(r.chi2, 0.0);
  EXPECT_EQ(r.p_two_tailed, 1.0);
}

TEST(McNemar, PValueFallsAsImbalanceGrows) {
  double last = 2.0;
  for (int b = 5; b <= 40; b += 5) {
    const auto p = discordant(b, 2);
    const auto r = mcnemar(p.a, p.b, p.labels);
    EXPECT_LT(r.p_two_tailed, last);
    last = r.p_two_tailed;
  }
}

TEST(McNemar, PValueText) {
  const auto big = discordant(400, 0, 0, 0);
  EXPECT_EQ(mcnemar(big.a, big.b, big.labels).p_text(), "< 2.2e-16");
  const auto small = discordant(10, 2);
  EXPECT_EQ(mcnemar(small.a, small.b, small.labels).p_text(), "0.0433081");
}

TEST(ChiSquare, KnownQuantiles) {
  EXPECT_NEAR(chi2_sf_1dof(3.841458820694124), 0.05, 1e-12);
  EXPECT_NEAR(chi2_sf_1dof(6.634896601021214), 0.01, 1e-12);
  EXPECT_EQ(chi2_sf_1dof(0.0), 1.0);
}
