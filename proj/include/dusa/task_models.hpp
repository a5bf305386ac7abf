#pragma once

#include <vector>

#include "dusa/autodiff.hpp"
#include "dusa/mlp.hpp"
#include "dusa/rng.hpp"

namespace dusa::task {

inline const std::string kClassifierPrefix = "clf.";
inline const std::string kLabelerPrefix = "seg.";

struct ClassifierConfig {
  int dim = 8;
  int classes = 8;
  std::vector<int> hidden{64, 64};
};

/// K-way MLP classifier over d-vectors.
struct Classifier {
  ClassifierConfig config;
  ParamSet params;
  double source_accuracy = 0.0;  // held-out accuracy recorded by train_classifier

  MlpShape shape() const;
};

Classifier make_classifier(const ClassifierConfig& cfg, Rng& rng, bool zero_last = true);

Var classify(const Classifier& c, const ParamVars& vars, const Mat& x);
Mat classify(const Classifier& c, const Mat& x);
Vec classify(const Classifier& c, const Vec& x);

/// Argmax with ties resolved toward the lowest index.
int predict(const Eigen::Ref<const RowVec>& logits);
std::vector<int> predict_rows(const Mat& logits);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

struct FitConfig {
  int epochs = 60;
  int batch = 64;
  double lr = 1e-3;
};

/// Cross-entropy training. When `holdout` data is given, its accuracy is
/// recorded as source_accuracy; otherwise the training accuracy is.
Classifier train_classifier(const Mat& x, const std::vector<int>& y, const ClassifierConfig& cfg,
                            const FitConfig& fit, Rng& rng, const Mat* holdout_x = nullptr,
                            const std::vector<int>* holdout_y = nullptr);

/// Mean softmax entropy of logits rows, on the tape.
Var mean_entropy(const Var& logits);

// -- dense labeling ----------------------------------------------------------

struct LabelerConfig {
  int height = 8;
  int width = 8;
  int channels = 2;
  int classes = 4;
  int pos_dim = 8;
  std::vector<int> hidden{64, 64};

  int pixels() const { return height * width; }
};

/// Per-pixel MLP shared across the grid. Input per pixel: its channel values
/// followed by a fixed sinusoidal encoding of (row, col). Images are stored one
/// per row, flattened pixel-major: index (h * W + w) * C + channel.
struct DenseLabeler {
  LabelerConfig config;
  ParamSet params;

  MlpShape shape() const;
};

DenseLabeler make_dense_labeler(const LabelerConfig& cfg, Rng& rng, bool zero_last = true);

Mat positional_encoding(const LabelerConfig& cfg);

/// Per-pixel inputs, (N * H * W) x (C + pos_dim).
Mat pixel_inputs(const LabelerConfig& cfg, const Mat& images);

/// Logits with one row per pixel: row n * H * W + p.
Var dense_classify(const DenseLabeler& dl, const ParamVars& vars, const Mat& images);
Mat dense_classify(const DenseLabeler& dl, const Mat& images);

/// Mean over classes with a non-empty union of intersection-over-union.
double mean_iou(const std::vector<int>& predicted, const std::vector<int>& truth, int classes);

DenseLabeler train_dense_labeler(const Mat& images, const std::vector<int>& pixel_labels, const LabelerConfig& cfg,
                                 const FitConfig& fit, Rng& rng);

}  // namespace dusa::task
