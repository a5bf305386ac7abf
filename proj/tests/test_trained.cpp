// Checks against the default source models, pretrained once for the suite.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dusa/protocol.hpp"

using namespace dusa;
namespace df = dusa::diffusion;

namespace {

class Trained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new config::Json(config::defaults());
    lab_ = new lab::Lab(lab::pretrain(*cfg_, true));
  }
  static void TearDownTestSuite() {
    delete lab_;
    delete cfg_;
  }
  static config::Json* cfg_;
  static lab::Lab* lab_;
};

config::Json* Trained::cfg_ = nullptr;
lab::Lab* Trained::lab_ = nullptr;

double cosine(const Vec& a, const Vec& b) { return a.dot(b) / (a.norm() * b.norm()); }

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_F(Trained, ClassifierSeparatesTheSourceClasses) {
  EXPECT_GE(lab_->classifier.source_accuracy, 0.95);
  Rng rng(1);
  const auto fresh = gmm::sample(lab_->world.mixture, 10000, rng);
  const double acc = task::accuracy(task::predict_rows(task::classify(lab_->classifier, fresh.x)), fresh.y);
  EXPECT_NEAR(acc, lab_->classifier.source_accuracy, 0.01);
}

TEST_F(Trained, LabelerSegmentsTheSourceGrids) {
  const auto& seg = *lab_->seg;
  const auto pred = task::predict_rows(task::dense_classify(seg.labeler, seg.test.images));
  EXPECT_GE(task::mean_iou(pred, seg.test.pixel_labels, seg.world.config.classes), 0.7);
}

TEST_F(Trained, ConditionalNoiseTracksTheOracle) {
  const int t = 100;
  const double ab = lab_->schedule.abar(t);
  Rng rng(2);
  const auto s = gmm::sample(lab_->world.mixture, 2000, rng);
  const Mat eps = rng.normal(2000, s.x.cols());
  const Mat x_t = df::noisy_sample(s.x, t, eps, lab_->schedule);
  double total = 0.0;
  for (Index i = 0; i < 2000; ++i) {
    const int y = s.y[static_cast<std::size_t>(i)];
    const Vec pred = df::denoise(lab_->denoiser, x_t.row(i), t, y).row(0).transpose();
    total += cosine(pred, gmm::expected_noise(lab_->world.mixture, ab, x_t.row(i).transpose(), y));
  }
  EXPECT_GE(total / 2000.0, 0.9);
}

TEST_F(Trained, NullScoreErrorShrinksWithNoiseLevel) {
  // Median relative error of the null-condition score against the diffused mixture.
  std::vector<double> med;
  for (int t : {100, 200, 500}) {
    const gmm::Mixture dm = gmm::diffuse(lab_->world.mixture, lab_->schedule.abar(t));
    Rng rng(3);
    const auto s = gmm::sample(dm, 2000, rng);
    const Mat est = df::score_estimate(lab_->denoiser, s.x, t, lab_->denoiser.null_label(), lab_->schedule);
    std::vector<double> rel;
    for (Index i = 0; i < s.x.rows(); ++i) {
      const Vec truth = gmm::score(dm, s.x.row(i).transpose());
      rel.push_back((est.row(i).transpose() - truth).norm() / truth.norm());
    }
    med.push_back(median(rel));
  }
  EXPECT_GT(med[0], med[1]);
  EXPECT_GT(med[1], med[2]);
  EXPECT_LE(med[2], 0.2);
}

TEST_F(Trained, SourceOnlyStreamMatchesOfflineEvaluation) {
  harness::StreamSpec spec = harness::stream_spec(*cfg_);
  spec.corruptions = {corruption::parse_spec("mean_shift:1")};
  const auto rec = harness::run_protocol(harness::Method::source_only, harness::Protocol::fully, spec, *lab_, *cfg_);
  const auto data = harness::stream_segment(spec, 0, *lab_);
  Index start = 0;
  for (std::size_t b = 0; b < rec.rows.size(); ++b) {
    const Index n = rec.rows[b].samples;
    const std::vector<int> y(data.y.begin() + start, data.y.begin() + start + n);
    EXPECT_EQ(rec.rows[b].acc, task::accuracy(task::predict_rows(task::classify(lab_->classifier, Mat(data.x.middleRows(start, n)))), y));
    start += n;
  }
}

class SingleGaussian : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    Rng rng(4);
    const Mat x = rng.normal(6000, 2);
    dn_ = new df::Denoiser(df::train_denoiser(x, std::vector<int>(6000, 0), s_, {2, 1, 16, 4, {64, 64}}, {30, 64, 1e-3, 0.5}, rng));
  }
  static void TearDownTestSuite() { delete dn_; }
  static inline const df::NoiseSchedule s_ = df::linear_schedule();
  static df::Denoiser* dn_;
};

df::Denoiser* SingleGaussian::dn_ = nullptr;

TEST_F(SingleGaussian, NullConditionLearnsTheShrinkage) {
  double total = 0.0;
  int count = 0;
  for (int t : {50, 200, 500, 900}) {
    for (double a = -2.0; a <= 2.0; a += 0.5)
      for (double b = -2.0; b <= 2.0; b += 0.5) {
        if (a == 0.0 && b == 0.0) continue;
        const Mat x_t = (Mat(1, 2) << a, b).finished();
        const Vec pred = df::denoise(*dn_, x_t, t, dn_->null_label()).row(0).transpose();
        total += cosine(pred, std::sqrt(1.0 - s_.abar(t)) * x_t.row(0).transpose());
        ++count;
      }
  }
  EXPECT_GE(total / count, 0.95);
}

TEST_F(SingleGaussian, ScoreEstimateTracksTheDiffusedGaussian) {
  // The diffused standard normal is standard normal, with score -x.
  Rng rng(5);
  const Mat x_t = rng.normal(2000, 2);
  const Mat est = df::score_estimate(*dn_, x_t, 100, dn_->null_label(), s_);
  std::vector<double> rel;
  for (Index i = 0; i < x_t.rows(); ++i) rel.push_back((est.row(i) + x_t.row(i)).norm() / x_t.row(i).norm());
  EXPECT_LE(median(rel), 0.2);
}
