#include <gtest/gtest.h>

#include <cmath>

#include "dusa/task_models.hpp"

using namespace dusa;
using namespace dusa::task;

TEST(Predict, TiesGoToLowestIndex) {
  EXPECT_EQ(predict((RowVec(4) << 1, 3, 3, 2).finished()), 1);
  EXPECT_EQ(predict(RowVec::Zero(5)), 0);
  Mat l(2, 3);
  l << 0, 1, 0, 5, 5, 5;
  EXPECT_EQ(predict_rows(l), (std::vector<int>{1, 0}));
  EXPECT_DOUBLE_EQ(accuracy({1, 2, 3, 4}, {1, 0, 3, 0}), 0.5);
  EXPECT_THROW(accuracy({1}, {1, 2}), std::invalid_argument);
}

TEST(Entropy, UniformAndConfidentLogits) {
  Tape t1;
  EXPECT_NEAR(mean_entropy(t1.constant(Mat::Zero(3, 8))).scalar(), std::log(8.0), 1e-14);
  Tape t2;
  Mat conf = Mat::Zero(2, 4);
  conf(0, 1) = conf(1, 3) = 60.0;
  EXPECT_LT(mean_entropy(t2.constant(conf)).scalar(), 1e-20);
}

TEST(Entropy, GradientVanishesWhenConfident) {
  Mat conf = Mat::Zero(2, 4);
  conf(0, 1) = conf(1, 3) = 40.0;
  const ParamSet g = grad([](Tape&, const ParamVars& v) { return mean_entropy(v.at("z")); }, {{"z", conf}});
  EXPECT_LT(g.at("z").cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Classifier, ForwardsAgreeAndTrainingSeparates) {
  Rng rng(1);
  Mat x(600, 2);
  std::vector<int> y(600);
  for (int i = 0; i < 600; ++i) {
    y[i] = i % 3;
    x.row(i) = (Mat(1, 2) << 4.0 * std::cos(2.1 * y[i]), 4.0 * std::sin(2.1 * y[i])).finished() + 0.5 * rng.normal(1, 2);
  }
  const Classifier c = train_classifier(x, y, {2, 3, {16}}, FitConfig{20, 32, 1e-2}, rng, &x, &y);
  EXPECT_GT(c.source_accuracy, 0.97);
  Tape tape;
  const Mat a = classify(c, bind(tape, c.params), x.topRows(5)).value();
  EXPECT_TRUE(a.isApprox(classify(c, Mat(x.topRows(5))), 1e-15));
  const Vec one = classify(c, Vec(x.row(3).transpose()));
  EXPECT_TRUE(one.transpose().isApprox(a.row(3), 1e-15));
}

TEST(Labeler, PixelLayoutAndPositionalEncoding) {
  const LabelerConfig cfg{2, 3, 2, 4, 4, {8}};
  const Mat pe = positional_encoding(cfg);
  EXPECT_EQ(pe.rows(), 6);
  EXPECT_EQ(pe.cols(), 4);
  EXPECT_FALSE(pe.row(0).isApprox(pe.row(4)));
  Mat img(1, 12);
  for (int i = 0; i < 12; ++i) img(0, i) = i;
  const Mat in = pixel_inputs(cfg, img);
  ASSERT_EQ(in.rows(), 6);
  ASSERT_EQ(in.cols(), 6);
  // Pixel (h=1, w=2) is index 5 and owns channels 10, 11.
  EXPECT_DOUBLE_EQ(in(5, 0), 10.0);
  EXPECT_DOUBLE_EQ(in(5, 1), 11.0);
  EXPECT_TRUE(in.block(5, 2, 1, 4).isApprox(pe.row(5)));
}

TEST(Labeler, OutputRowsPerPixel) {
  Rng rng(2);
  const LabelerConfig cfg{3, 3, 2, 4, 4, {8}};
  const DenseLabeler dl = make_dense_labeler(cfg, rng, false);
  const Mat imgs = rng.normal(2, 18);
  const Mat logits = dense_classify(dl, imgs);
  EXPECT_EQ(logits.rows(), 18);
  EXPECT_EQ(logits.cols(), 4);
  // Row n * P + p depends only on image n.
  Mat other = imgs;
  other.row(1).setZero();
  EXPECT_TRUE(dense_classify(dl, other).topRows(9).isApprox(logits.topRows(9)));
}

TEST(MeanIou, AgainstBruteForce) {
  const std::vector<int> pred{0, 0, 1, 1, 2, 2, 0, 1};
  const std::vector<int> truth{0, 1, 1, 1, 2, 0, 0, 3};
  double total = 0.0;
  int present = 0;
  for (int k = 0; k < 5; ++k) {
    int inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      inter += pred[i] == k && truth[i] == k;
      uni += pred[i] == k || truth[i] == k;
    }
    if (uni) total += static_cast<double>(inter) / uni, ++present;
  }
  EXPECT_NEAR(mean_iou(pred, truth, 5), total / present, 1e-15);
  EXPECT_DOUBLE_EQ(mean_iou({1, 1}, {1, 1}, 3), 1.0);
}
