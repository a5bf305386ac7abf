#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>
#include <set>

#include "dusa/csm.hpp"

using namespace dusa;
using namespace dusa::csm;

TEST(LogitNorm, UnitNormProperty) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    RowVec z = rng.normal(1, 1 + i % 12);
    z *= std::exp(6.0 * rng.normal());
    if (z.norm() == 0.0) continue;
    EXPECT_NEAR(logit_norm(z).norm(), 1.0, 1e-12);
  }
}

TEST(LogitNorm, GuardKeepsZeroFinite) {
  const RowVec z = logit_norm(RowVec::Zero(4));
  EXPECT_TRUE(z.allFinite());
  EXPECT_TRUE(z.isZero(0.0));
  Tape tape;
  EXPECT_TRUE(logit_norm(tape.constant(Mat::Zero(2, 3))).value().isZero(0.0));
}

TEST(Select, TopKDeterministicWithLowIndexTies) {
  Rng rng(2);
  const RowVec z = (RowVec(6) << 1.0, 3.0, 2.0, 3.0, 0.5, 2.0).finished();
  const auto idx = select(z, {3, 0}, rng);
  EXPECT_EQ(idx, (std::vector<int>{1, 3, 2}));
  EXPECT_EQ(select(z, {1, 0}, rng), (std::vector<int>{1}));
}

TEST(Select, ExtrasDistinctAndOutsideTopK) {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const RowVec z = rng.normal(1, 10);
    const auto idx = select(z, {4, 2}, rng);
    ASSERT_EQ(idx.size(), 6u);
    std::set<int> s(idx.begin(), idx.end());
    EXPECT_EQ(s.size(), 6u);
    std::vector<int> order(10);
    for (int i = 0; i < 10; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return z(a) > z(b); });
    for (int i = 0; i < 4; ++i) EXPECT_EQ(idx[i], order[i]);
  }
}

TEST(Select, WithoutReplacementSoftmaxLaw) {
  // Ordered extra pairs (i, j) have probability w_i / W * w_j / (W - w_i),
  // enumerated exhaustively and compared by a chi-square test at 1 %.
  const RowVec z = (RowVec(10) << 2.0, 1.5, -0.3, 0.9, 3.1, 0.2, -1.0, 2.6, 0.7, 1.1).finished();
  std::vector<int> order(10);
  for (int i = 0; i < 10; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return z(a) > z(b); });
  const std::vector<int> rest(order.begin() + 4, order.end());
  double total = 0.0;
  for (int c : rest) total += std::exp(z(c));
  std::map<std::pair<int, int>, double> expected;
  for (int i : rest)
    for (int j : rest)
      if (i != j) expected[{i, j}] = std::exp(z(i)) / total * std::exp(z(j)) / (total - std::exp(z(i)));

  Rng rng(4);
  const int n = 100000;
  std::map<std::pair<int, int>, int> seen;
  for (int i = 0; i < n; ++i) {
    const auto idx = select(z, {4, 2}, rng);
    ++seen[{idx[4], idx[5]}];
  }
  double chi2 = 0.0;
  for (const auto& [pair, p] : expected) {
    const double e = n * p;
    const double o = seen.count(pair) ? seen.at(pair) : 0;
    chi2 += (o - e) * (o - e) / e;
  }
  EXPECT_EQ(seen.size(), expected.size());
  const boost::math::chi_squared law(static_cast<double>(expected.size() - 1));
  EXPECT_LT(chi2, boost::math::quantile(law, 0.99)) << "chi2 " << chi2;
}

TEST(Select, UniformLawIgnoresLogits) {
  const RowVec z = (RowVec(5) << 10.0, 9.0, -50.0, 0.0, 3.0).finished();
  Rng rng(5);
  std::map<int, int> counts;
  const int n = 30000;
  for (int i = 0; i < n; ++i) ++counts[select(z, {2, 1, ExtraLaw::uniform}, rng)[2]];
  for (int c : {2, 3, 4}) EXPECT_NEAR(counts[c] / static_cast<double>(n), 1.0 / 3, 0.015);
}

TEST(Select, FullBudgetSkipsTheRng) {
  const RowVec z = (RowVec(4) << 0.1, 0.4, 0.3, 0.2).finished();
  Rng a(6), b(6);
  EXPECT_EQ(select(z, {2, 2}, a), (std::vector<int>{1, 2, 0, 3}));
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Budget, ClippedAboveClassesAndRejectedWhenEmpty) {
  const BudgetConfig e = effective({6, 4}, 8);
  EXPECT_EQ(e.k, 6);
  EXPECT_EQ(e.m, 2);
  const BudgetConfig f = effective({10, 2}, 8);
  EXPECT_EQ(f.k, 8);
  EXPECT_EQ(f.m, 0);
  EXPECT_THROW(effective({0, 0}, 8), std::invalid_argument);
  EXPECT_THROW(effective({-1, 3}, 8), std::invalid_argument);
  Rng rng(7);
  EXPECT_EQ(select(RowVec::Zero(3), {4, 2}, rng).size(), 3u);
}

TEST(Probs, SoftmaxOverNormalisedSubset) {
  const RowVec z = (RowVec(5) << 3.0, -1.0, 2.0, 0.0, 1.0).finished();
  const RowVec zn = z / z.norm();
  const Vec p = probs_over(zn, {4, 0});
  const double a = std::exp(zn(4)), b = std::exp(zn(0));
  EXPECT_NEAR(p(0), a / (a + b), 1e-15);
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_THROW(probs_over(zn, {1, 1}), std::invalid_argument);
  EXPECT_THROW(probs_over(zn, {7}), std::out_of_range);
  EXPECT_THROW(probs_over(zn, {}), std::invalid_argument);
}

TEST(Probs, FullBudgetEqualsUnprunedSoftmax) {
  Rng rng(8);
  const RowVec z = rng.normal(1, 8);
  const CandidateSet c = select_candidates(z, {8, 0}, rng);
  const RowVec zn = logit_norm(z);
  const Vec full = (zn.array() - zn.maxCoeff()).exp().matrix().transpose() / (zn.array() - zn.maxCoeff()).exp().sum();
  for (std::size_t j = 0; j < c.indices.size(); ++j) EXPECT_NEAR(c.probs(j), full(c.indices[j]), 1e-15);
}

TEST(Probs, TapeVersionMatches) {
  Rng rng(9);
  const Mat logits = rng.normal(3, 6);
  const IndexMat idx = select_rows(logits, {2, 2}, rng);
  Tape tape;
  const Mat p = candidate_probs(tape.constant(logits), idx).value();
  for (int i = 0; i < 3; ++i) {
    const std::vector<int> row{idx(i, 0), idx(i, 1), idx(i, 2), idx(i, 3)};
    EXPECT_TRUE(p.row(i).transpose().isApprox(probs_over(logit_norm(logits.row(i)), row), 1e-14));
  }
}

TEST(Probs, GradientThroughNormalisation) {
  Rng rng(10);
  IndexMat idx(2, 3);
  idx << 0, 3, 1, 2, 0, 4;
  const Mat r = rng.normal(2, 3);
  const LossFn f = [&](Tape& t, const ParamVars& v) { return sum(cwise_product(candidate_probs(v.at("z"), idx), t.constant(r))); };
  EXPECT_LT(grad_check(f, {{"z", rng.normal(2, 5)}}, 1e-6), 1e-7);
}
