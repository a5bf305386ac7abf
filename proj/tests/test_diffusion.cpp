#include <gtest/gtest.h>

#include <cmath>

#include "dusa/diffusion.hpp"

using namespace dusa;
using namespace dusa::diffusion;

TEST(Schedule, LinearAlphaBarByHand) {
  const NoiseSchedule s = linear_schedule();
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0;
    prod *= 1.0 - beta;
    EXPECT_NEAR(s.abar(t), prod, 1e-14 * prod + 1e-300);
  }
  EXPECT_NEAR(s.abar(100), 0.897, 1e-3);
  EXPECT_EQ(s.abar(0), 1.0);
  EXPECT_THROW(s.abar(1001), std::out_of_range);
  EXPECT_THROW(s.abar(-1), std::out_of_range);
}

TEST(Schedule, FingerprintTracksBetas) {
  EXPECT_EQ(linear_schedule().fingerprint(), linear_schedule().fingerprint());
  EXPECT_NE(linear_schedule().fingerprint(), linear_schedule(1000, 1e-4, 0.03).fingerprint());
  EXPECT_NE(linear_schedule().fingerprint(), linear_schedule(500).fingerprint());
}

TEST(Forward, NoisySampleFormula) {
  const NoiseSchedule s = linear_schedule();
  Rng rng(1);
  const Mat x0 = rng.normal(3, 4), eps = rng.normal(3, 4);
  const double ab = s.abar(250);
  EXPECT_TRUE(noisy_sample(x0, 250, eps, s).isApprox(std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps, 1e-15));
  EXPECT_TRUE(noisy_sample(x0, 0, eps, s) == x0);
}

TEST(Parameterisations, ConversionsReproduceTargets) {
  Rng rng(2);
  const Mat x0 = rng.normal(5, 3), eps = rng.normal(5, 3);
  for (double ab : {0.01, 0.5, 0.897, 0.999}) {
    const Mat xt = std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps;
    for (auto from : {PredictionKind::epsilon, PredictionKind::x0, PredictionKind::v})
      for (auto to : {PredictionKind::epsilon, PredictionKind::x0, PredictionKind::v}) {
        const Mat got = convert_prediction(from, to, prediction_target(from, x0, eps, ab), xt, ab);
        EXPECT_TRUE(got.isApprox(prediction_target(to, x0, eps, ab), 1e-10))
            << to_string(from) << " -> " << to_string(to) << " at " << ab;
      }
    const Mat v = std::sqrt(ab) * eps - std::sqrt(1 - ab) * x0;
    EXPECT_TRUE(prediction_target(PredictionKind::v, x0, eps, ab).isApprox(v, 1e-15));
  }
}

TEST(Parameterisations, VarConversionMatchesMat) {
  Rng rng(3);
  const Mat val = rng.normal(2, 3), xt = rng.normal(2, 3);
  Tape tape;
  const Var v = tape.constant(val);
  for (auto from : {PredictionKind::epsilon, PredictionKind::x0, PredictionKind::v})
    for (auto to : {PredictionKind::epsilon, PredictionKind::x0, PredictionKind::v})
      EXPECT_TRUE(convert_prediction(from, to, v, xt, 0.3).value().isApprox(convert_prediction(from, to, val, xt, 0.3)));
}

TEST(Parameterisations, Names) {
  EXPECT_EQ(parse_prediction_kind("x0"), PredictionKind::x0);
  EXPECT_EQ(to_string(PredictionKind::v), "v");
  EXPECT_THROW(parse_prediction_kind("score"), std::invalid_argument);
}

TEST(TimeEmbedding, SinCosLayout) {
  const Mat e = time_embedding({0, 7}, 6);
  EXPECT_DOUBLE_EQ(e(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(e(0, 3), 1.0);
  EXPECT_NEAR(e(1, 0), std::sin(7.0), 1e-15);
  EXPECT_NEAR(e(1, 1), std::sin(7.0 * std::pow(10000.0, -1.0 / 3)), 1e-15);
  EXPECT_NEAR(e(1, 5), std::cos(7.0 * std::pow(10000.0, -2.0 / 3)), 1e-15);
}

namespace {

Denoiser tiny(Rng& rng, PredictionKind kind = PredictionKind::epsilon) {
  DenoiserConfig c;
  c.dim = 2;
  c.classes = 3;
  c.time_dim = 4;
  c.class_dim = 3;
  c.hidden = {8};
  c.kind = kind;
  return make_denoiser(c, rng, false);
}

}  // namespace

TEST(Denoiser, ShapesAndNullRow) {
  Rng rng(4);
  const Denoiser dn = tiny(rng);
  EXPECT_EQ(dn.null_label(), 3);
  EXPECT_EQ(dn.params.at(kEmbedName).rows(), 4);
  EXPECT_EQ(dn.params.at(kEmbedName).cols(), 3);
  const Mat out = denoise(dn, rng.normal(5, 2), 10, 3);
  EXPECT_EQ(out.rows(), 5);
  EXPECT_EQ(out.cols(), 2);
  EXPECT_THROW(denoise(dn, rng.normal(5, 3), 10, 0), ShapeError);
  EXPECT_THROW(denoise(dn, rng.normal(5, 2), 10, 4), std::out_of_range);
}

TEST(Denoiser, ZeroInitialisedOutput) {
  Rng rng(5);
  DenoiserConfig c;
  c.dim = 3;
  const Denoiser dn = make_denoiser(c, rng);
  EXPECT_TRUE(denoise(dn, rng.normal(4, 3), 100, 2).isZero(0.0));
}

TEST(Denoiser, OneHotSoftConditionEqualsHard) {
  Rng rng(6);
  const Denoiser dn = tiny(rng);
  const Mat xt = rng.normal(3, 2);
  Mat onehot = Mat::Zero(3, 3);
  onehot(0, 2) = onehot(1, 0) = onehot(2, 1) = 1.0;
  Tape tape;
  const ParamVars vars = bind(tape, dn.params);
  const Mat soft = denoise_soft(dn, vars, xt, {50, 50, 50}, tape.constant(onehot)).value();
  const Mat hard = denoise(dn, vars, xt, {50, 50, 50}, {2, 0, 1}).value();
  EXPECT_TRUE(soft.isApprox(hard, 1e-15));
}

TEST(Denoiser, PlainAndTapeForwardsAgree) {
  Rng rng(7);
  const Denoiser dn = tiny(rng);
  const Mat xt = rng.normal(4, 2);
  Tape tape;
  const Mat a = denoise(dn, bind(tape, dn.params), xt, {9, 9, 9, 9}, {1, 1, 1, 1}).value();
  EXPECT_TRUE(a.isApprox(denoise(dn, xt, 9, 1), 1e-15));
}

TEST(Denoiser, ScoreEstimateFromEpsilon) {
  Rng rng(8);
  const NoiseSchedule s = linear_schedule();
  const Denoiser dn = tiny(rng);
  const Mat xt = rng.normal(2, 2);
  EXPECT_TRUE(score_estimate(dn, xt, 300, 0, s).isApprox(-denoise(dn, xt, 300, 0) / std::sqrt(1 - s.abar(300)), 1e-14));
  const Denoiser dx = tiny(rng, PredictionKind::x0);
  const Mat x0hat = denoise(dx, xt, 300, 0);
  const Mat eps = (xt - std::sqrt(s.abar(300)) * x0hat) / std::sqrt(1 - s.abar(300));
  EXPECT_TRUE(score_estimate(dx, xt, 300, 0, s).isApprox(-eps / std::sqrt(1 - s.abar(300)), 1e-12));
}

TEST(Training, LossDecreasesAndIsDeterministic) {
  Rng data_rng(9);
  Mat x(400, 2);
  std::vector<int> y(400);
  for (int i = 0; i < 400; ++i) {
    y[i] = i % 3;
    x.row(i) = (Mat(1, 2) << 3.0 * (y[i] - 1), 0.0).finished() + 0.3 * data_rng.normal(1, 2);
  }
  const NoiseSchedule s = linear_schedule();
  DenoiserConfig c;
  c.dim = 2;
  c.classes = 3;
  c.hidden = {32, 32};
  std::vector<double> trace1, trace2;
  Rng r1(1), r2(1);
  const Denoiser a = train_denoiser(x, y, s, c, TrainConfig{15, 32, 3e-3, 0.1}, r1, &trace1);
  const Denoiser b = train_denoiser(x, y, s, c, TrainConfig{15, 32, 3e-3, 0.1}, r2, &trace2);
  ASSERT_EQ(trace1.size(), 15u);
  EXPECT_LT(trace1.back(), 0.8 * trace1.front());
  EXPECT_EQ(trace1, trace2);
  for (const auto& [name, value] : a.params) EXPECT_TRUE(value == b.params.at(name)) << name;
  EXPECT_THROW(train_denoiser(x, std::vector<int>(400, 5), s, c, TrainConfig{}, r1), std::out_of_range);
}
