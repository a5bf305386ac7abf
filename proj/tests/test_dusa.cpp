#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dusa/dusa.hpp"

using namespace dusa;
namespace df = dusa::diffusion;

namespace {

struct Models {
  task::Classifier clf;
  df::Denoiser dn;
  df::NoiseSchedule s = df::linear_schedule();
};

Models tiny(std::uint64_t seed, int classes = 8, int dim = 3) {
  Rng rng(seed);
  Models m;
  m.clf = task::make_classifier({dim, classes, {7}}, rng, false);
  m.dn = df::make_denoiser({dim, classes, 4, 3, {6}, df::PredictionKind::epsilon}, rng, false);
  return m;
}

double brute_dusa(const Mat& target, const Mat& probs, const Mat& preds) {
  const Index n = target.rows(), b = probs.cols();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < target.cols(); ++c) {
      double agg = 0.0;
      for (Index j = 0; j < b; ++j) agg += probs(i, j) * preds(i * b + j, c);
      total += (target(i, c) - agg) * (target(i, c) - agg);
    }
  }
  return total / static_cast<double>(n);
}

Mat row_stochastic(Rng& rng, Index n, Index b) {
  Mat p = rng.normal(n, b).array().exp().matrix();
  for (Index i = 0; i < n; ++i) p.row(i) /= p.row(i).sum();
  return p;
}

}  // namespace

TEST(Objective, AggregateIsWeightedSum) {
  const Vec p = (Vec(2) << 0.25, 0.75).finished();
  const Vec a = (Vec(2) << 1.0, 2.0).finished(), b = (Vec(2) << -1.0, 4.0).finished();
  EXPECT_TRUE(aggregate(p, {a, b}).isApprox((Vec(2) << -0.5, 3.5).finished()));
  EXPECT_THROW(aggregate(p, {a}), ShapeError);
}

TEST(Objective, DusaLossMatchesLoops) {
  Rng rng(1);
  const Mat target = rng.normal(4, 3), probs = row_stochastic(rng, 4, 5), preds = rng.normal(20, 3);
  Tape tape;
  const double v = loss_dusa(target, tape.constant(probs), tape.constant(preds)).scalar();
  EXPECT_NEAR(v, brute_dusa(target, probs, preds), 1e-12);
  EXPECT_THROW(loss_dusa(target, tape.constant(probs.topRows(3)), tape.constant(preds)), ShapeError);
}

TEST(Objective, DusaUValueIsSumOfTerms) {
  Rng rng(2);
  const Mat eps = rng.normal(3, 2), probs = row_stochastic(rng, 3, 4), preds = rng.normal(12, 2), un = rng.normal(3, 2);
  Tape tape;
  const double v = loss_dusa_u(eps, tape.constant(probs), tape.constant(preds), tape.constant(un)).scalar();
  EXPECT_NEAR(v, brute_dusa(eps, probs, preds) + (eps - un).squaredNorm() / 3.0, 1e-12);
}

TEST(Objective, SegLossMatchesLoops) {
  Rng rng(3);
  const Index n = 2, pixels = 5, channels = 3, b = 4;
  const Mat eps = rng.normal(n, pixels * channels);
  const Mat probs = row_stochastic(rng, n * pixels, b);
  const Mat maps = rng.normal(n * b, pixels * channels);
  double total = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index p = 0; p < pixels; ++p)
      for (Index c = 0; c < channels; ++c) {
        double agg = 0.0;
        for (Index j = 0; j < b; ++j) agg += probs(i * pixels + p, j) * maps(i * b + j, p * channels + c);
        const double r = eps(i, p * channels + c) - agg;
        total += r * r;
      }
  Tape tape;
  const double v = loss_dusa_seg(eps, tape.constant(probs), tape.constant(maps), channels).scalar();
  EXPECT_NEAR(v, total / static_cast<double>(n * pixels), 1e-12);
  EXPECT_THROW(loss_dusa_seg(eps, tape.constant(probs), tape.constant(maps), 4), ShapeError);
}

TEST(Objective, EquivalentParameterisationsScaleTheLoss) {
  Rng rng(4);
  const auto s = df::linear_schedule();
  for (int t : {10, 100, 500, 900}) {
    const double ab = s.abar(t);
    const Mat x0 = rng.normal(5, 3), eps = rng.normal(5, 3);
    const Mat x_t = df::noisy_sample(x0, t, eps, s);
    const Mat probs = row_stochastic(rng, 5, 4), preds = rng.normal(20, 3);
    Tape tape;
    const Var p = tape.constant(probs), e = tape.constant(preds);
    const double le = loss_variant(df::PredictionKind::epsilon, df::PredictionKind::epsilon, x0, eps, x_t, ab, p, e).scalar();
    const double lx = loss_variant(df::PredictionKind::x0, df::PredictionKind::epsilon, x0, eps, x_t, ab, p, e).scalar();
    const double lv = loss_variant(df::PredictionKind::v, df::PredictionKind::epsilon, x0, eps, x_t, ab, p, e).scalar();
    EXPECT_NEAR(lx / le, (1.0 - ab) / ab, 1e-10 * (1.0 - ab) / ab) << t;
    EXPECT_NEAR(lv / le, 1.0 / ab, 1e-10 / ab) << t;
  }
}

TEST(Mode, Names) {
  EXPECT_EQ(parse_mode("dusa_u"), Mode::dusa_u);
  EXPECT_EQ(to_string(Mode::dusa), "dusa");
  EXPECT_THROW(parse_mode("dusa-u"), std::invalid_argument);
}

TEST(AdaptStep, CountsPerMode) {
  for (Mode mode : {Mode::dusa, Mode::dusa_u}) {
    Models m = tiny(5);
    Rng rng(6);
    Adam opt;
    AdaptConfig cfg;
    cfg.mode = mode;
    const auto r = adapt_step(rng.normal(5, 3), m.clf, m.dn, m.s, cfg, opt, rng);
    EXPECT_EQ(r.denoiser_forwards, mode == Mode::dusa ? 30 : 35);
    EXPECT_EQ(r.denoiser_backwards, mode == Mode::dusa ? 30 : 5);
    EXPECT_EQ(r.candidates.cols(), 6);
  }
}

TEST(AdaptStep, PredictsBeforeUpdating) {
  Models m = tiny(7);
  Rng rng(8);
  const Mat x = rng.normal(6, 3);
  const auto before = task::predict_rows(task::classify(m.clf, x));
  const ParamSet snapshot = m.clf.params;
  Adam opt(AdamConfig{0.5});
  const auto r = adapt_step(x, m.clf, m.dn, m.s, {}, opt, rng);
  EXPECT_EQ(r.predictions, before);
  bool changed = false;
  for (const auto& [name, v] : snapshot) changed |= !(v.array() == m.clf.params.at(name).array()).all();
  EXPECT_TRUE(changed);
}

TEST(AdaptStep, DeterministicForEqualSeeds) {
  Models a = tiny(9), b = tiny(9);
  Rng ra(10), rb(10);
  Adam oa, ob;
  const Mat x = Rng(11).normal(4, 3);
  for (int step = 0; step < 3; ++step) {
    adapt_step(x, a.clf, a.dn, a.s, {}, oa, ra);
    adapt_step(x, b.clf, b.dn, b.s, {}, ob, rb);
  }
  for (const auto& [name, v] : a.clf.params) EXPECT_TRUE((v.array() == b.clf.params.at(name).array()).all()) << name;
  for (const auto& [name, v] : a.dn.params) EXPECT_TRUE((v.array() == b.dn.params.at(name).array()).all()) << name;
}

TEST(AdaptStep, AccumulationAveragesToTheFullBatchGradient) {
  Models a = tiny(12), b = tiny(12);
  Rng ra(13), rb(13);
  Adam oa, ob;
  const Mat x = Rng(14).normal(6, 3);
  AdaptConfig one, three;
  three.accumulate = 3;
  adapt_step(x, a.clf, a.dn, a.s, one, oa, ra);
  adapt_step(x, b.clf, b.dn, b.s, three, ob, rb);
  for (const auto& [name, v] : a.clf.params) EXPECT_TRUE(v.isApprox(b.clf.params.at(name), 1e-12)) << name;
}

TEST(AdaptStep, FullBudgetPosteriorIsUnprunedSoftmax) {
  Models m = tiny(15);
  Rng rng(16);
  const Mat x = rng.normal(4, 3);
  const Mat logits = task::classify(m.clf, x);
  Adam opt;
  AdaptConfig cfg;
  cfg.budget = {8, 0};
  const auto r = adapt_step(x, m.clf, m.dn, m.s, cfg, opt, rng);
  for (Index i = 0; i < 4; ++i) {
    const RowVec z = logits.row(i) / logits.row(i).norm();
    const RowVec e = (z.array() - z.maxCoeff()).exp().matrix();
    for (Index j = 0; j < 8; ++j) EXPECT_NEAR(r.candidate_probs(i, j), e(r.candidates(i, j)) / e.sum(), 1e-12);
  }
}

TEST(AdaptStep, RejectsTimestepOutsideSchedule) {
  Models m = tiny(17);
  Rng rng(18);
  Adam opt;
  AdaptConfig cfg;
  cfg.t = 0;
  EXPECT_THROW(adapt_step(rng.normal(2, 3), m.clf, m.dn, m.s, cfg, opt, rng), std::out_of_range);
  cfg.t = 1001;
  EXPECT_THROW(adapt_step(rng.normal(2, 3), m.clf, m.dn, m.s, cfg, opt, rng), std::out_of_range);
}

TEST(SegCandidates, ThinsToBudget) {
  Mat logits = Mat::Zero(6, 6);
  for (int p = 0; p < 6; ++p) logits(p, p) = 1.0;
  Rng rng(19);
  std::set<std::vector<int>> seen;
  for (int i = 0; i < 50; ++i) {
    const auto c = seg_candidates(logits, 3, rng);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
    seen.insert(c);
  }
  EXPECT_GT(seen.size(), 1u);
}

TEST(SegCandidates, TopsUpFromTheRest) {
  Mat logits = Mat::Zero(4, 6);
  logits.col(4).setOnes();
  Rng rng(20);
  const auto c = seg_candidates(logits, 3, rng);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_NE(std::find(c.begin(), c.end(), 4), c.end());
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
  EXPECT_EQ(seg_candidates(logits, 20, rng), (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_THROW(seg_candidates(logits, 0, rng), std::invalid_argument);
}

TEST(AdaptStepSeg, CountsPerMode) {
  Rng init(21);
  task::LabelerConfig lc{2, 2, 2, 3, 4, {5}};
  for (Mode mode : {Mode::dusa, Mode::dusa_u}) {
    task::DenseLabeler dl = task::make_dense_labeler(lc, init, false);
    df::Denoiser dn = df::make_denoiser({8, 3, 4, 3, {6}, df::PredictionKind::epsilon}, init, false);
    const auto s = df::linear_schedule();
    Adam opt;
    Rng rng(22);
    SegAdaptConfig cfg;
    cfg.budget = 2;
    cfg.mode = mode;
    const auto r = adapt_step_seg(rng.normal(3, 8), dl, dn, s, cfg, opt, rng);
    EXPECT_EQ(r.denoiser_forwards, mode == Mode::dusa ? 6 : 9);
    EXPECT_EQ(r.denoiser_backwards, mode == Mode::dusa ? 6 : 3);
    EXPECT_EQ(r.predictions.size(), 12u);
  }
}
