#include "dusa/task_models.hpp"

#include <cmath>
#include <numbers>

#include "dusa/optim.hpp"

namespace dusa::task {

namespace {

MlpShape shape_of(int in, const std::vector<int>& hidden, int out) {
  MlpShape s;
  s.sizes.push_back(in);
  s.sizes.insert(s.sizes.end(), hidden.begin(), hidden.end());
  s.sizes.push_back(out);
  return s;
}

/// Cross-entropy against integer labels, averaged over rows.
Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
  IndexMat cols(static_cast<Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) cols(static_cast<Index>(i), 0) = labels[i];
  return -1.0 * mean(gather_per_row(log_softmax_rows(logits), cols));
}

Mat gather(const Mat& x, const std::vector<int>& order, Index start, Index count) {
  Mat out(count, x.cols());
  for (Index i = 0; i < count; ++i) out.row(i) = x.row(order[start + i]);
  return out;
}

}  // namespace

// -- classifier --------------------------------------------------------------

MlpShape Classifier::shape() const { return shape_of(config.dim, config.hidden, config.classes); }

Classifier make_classifier(const ClassifierConfig& cfg, Rng& rng, bool zero_last) {
  if (cfg.dim < 1 || cfg.classes < 1) throw std::invalid_argument("make_classifier: invalid dimensions");
  Classifier c;
  c.config = cfg;
  c.params = init_mlp(kClassifierPrefix, c.shape(), rng, zero_last);
  return c;
}

Var classify(const Classifier& c, const ParamVars& vars, const Mat& x) {
  Tape& tape = vars.begin()->second.tape();
  return mlp_forward(vars, kClassifierPrefix, c.shape(), tape.constant(x));
}

Mat classify(const Classifier& c, const Mat& x) { return mlp_eval(c.params, kClassifierPrefix, c.shape(), x); }

Vec classify(const Classifier& c, const Vec& x) { return classify(c, Mat(x.transpose())).row(0).transpose(); }

int predict(const Eigen::Ref<const RowVec>& logits) {
  int best = 0;
  for (Index i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = static_cast<int>(i);
  return best;
}

std::vector<int> predict_rows(const Mat& logits) {
  std::vector<int> out(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) out[i] = predict(logits.row(i));
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

Classifier train_classifier(const Mat& x, const std::vector<int>& y, const ClassifierConfig& cfg,
                            const FitConfig& fit, Rng& rng, const Mat* holdout_x,
                            const std::vector<int>* holdout_y) {
  const Index n = x.rows();
  if (n == 0) throw std::invalid_argument("train_classifier: empty data");
  if (static_cast<Index>(y.size()) != n) throw ShapeError("train_classifier: one label per sample required");
  if (x.cols() != cfg.dim) throw ShapeError("train_classifier: data width differs from config");
  for (int label : y)
    if (label < 0 || label >= cfg.classes) throw std::out_of_range("train_classifier: label outside [0, K)");

  Classifier c = make_classifier(cfg, rng);
  Adam opt(AdamConfig{fit.lr});
  const int batch = std::max(1, fit.batch);
  for (int epoch = 0; epoch < fit.epochs; ++epoch) {
    const std::vector<int> order = rng.permutation(static_cast<int>(n));
    for (Index start = 0; start < n; start += batch) {
      const Index m = std::min<Index>(batch, n - start);
      const Mat xb = gather(x, order, start, m);
      std::vector<int> yb(m);
      for (Index i = 0; i < m; ++i) yb[i] = y[order[start + i]];
      opt.step(c.params, grad([&](Tape&, const ParamVars& vars) { return cross_entropy(classify(c, vars, xb), yb); },
                              c.params));
    }
  }
  if (holdout_x && holdout_y)
    c.source_accuracy = accuracy(predict_rows(classify(c, *holdout_x)), *holdout_y);
  else
    c.source_accuracy = accuracy(predict_rows(classify(c, x)), y);
  return c;
}

Var mean_entropy(const Var& logits) {
  const Var logp = log_softmax_rows(logits);
  const Var p = softmax_rows(logits);
  return (-1.0 / static_cast<double>(logits.rows())) * sum(cwise_product(p, logp));
}

// -- dense labeler -----------------------------------------------------------

MlpShape DenseLabeler::shape() const {
  return shape_of(config.channels + config.pos_dim, config.hidden, config.classes);
}

DenseLabeler make_dense_labeler(const LabelerConfig& cfg, Rng& rng, bool zero_last) {
  if (cfg.height < 1 || cfg.width < 1 || cfg.channels < 1 || cfg.classes < 1 || cfg.pos_dim % 4 != 0)
    throw std::invalid_argument("make_dense_labeler: invalid dimensions");
  DenseLabeler dl;
  dl.config = cfg;
  dl.params = init_mlp(kLabelerPrefix, dl.shape(), rng, zero_last);
  return dl;
}

Mat positional_encoding(const LabelerConfig& cfg) {
  Mat pe(cfg.pixels(), cfg.pos_dim);
  const int per_axis = cfg.pos_dim / 4;  // frequencies per axis
  const double base = std::numbers::pi / std::max(cfg.height, cfg.width);
  for (int h = 0; h < cfg.height; ++h)
    for (int w = 0; w < cfg.width; ++w) {
      const int p = h * cfg.width + w;
      for (int k = 0; k < per_axis; ++k) {
        const double f = base * std::pow(2.0, k);
        pe(p, 4 * k + 0) = std::sin(h * f);
        pe(p, 4 * k + 1) = std::cos(h * f);
        pe(p, 4 * k + 2) = std::sin(w * f);
        pe(p, 4 * k + 3) = std::cos(w * f);
      }
    }
  return pe;
}

Mat pixel_inputs(const LabelerConfig& cfg, const Mat& images) {
  const int c = cfg.channels, pixels = cfg.pixels();
  if (images.cols() != static_cast<Index>(pixels) * c)
    throw ShapeError("dense labeler expects images of width " + std::to_string(pixels * c) + ", got " +
                     std::to_string(images.cols()));
  const Mat pe = positional_encoding(cfg);
  Mat in(images.rows() * pixels, c + cfg.pos_dim);
  for (Index n = 0; n < images.rows(); ++n)
    for (int p = 0; p < pixels; ++p) {
      in.row(n * pixels + p).head(c) = images.row(n).segment(static_cast<Index>(p) * c, c);
      in.row(n * pixels + p).tail(cfg.pos_dim) = pe.row(p);
    }
  return in;
}

Var dense_classify(const DenseLabeler& dl, const ParamVars& vars, const Mat& images) {
  Tape& tape = vars.begin()->second.tape();
  return mlp_forward(vars, kLabelerPrefix, dl.shape(), tape.constant(pixel_inputs(dl.config, images)));
}

Mat dense_classify(const DenseLabeler& dl, const Mat& images) {
  return mlp_eval(dl.params, kLabelerPrefix, dl.shape(), pixel_inputs(dl.config, images));
}

double mean_iou(const std::vector<int>& predicted, const std::vector<int>& truth, int classes) {
  if (predicted.size() != truth.size()) throw ShapeError("mean_iou: length mismatch");
  std::vector<long> inter(classes, 0), uni(classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i], t = truth[i];
    if (p == t) {
      ++inter[t];
      ++uni[t];
    } else {
      ++uni[t];
      if (p >= 0 && p < classes) ++uni[p];
    }
  }
  double total = 0.0;
  int present = 0;
  for (int k = 0; k < classes; ++k) {
    if (uni[k] == 0) continue;
    total += static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
    ++present;
  }
  return present ? total / present : 0.0;
}

DenseLabeler train_dense_labeler(const Mat& images, const std::vector<int>& pixel_labels, const LabelerConfig& cfg,
                                 const FitConfig& fit, Rng& rng) {
  const Index n = images.rows();
  if (n == 0) throw std::invalid_argument("train_dense_labeler: empty data");
  const int pixels = cfg.pixels();
  if (static_cast<Index>(pixel_labels.size()) != n * pixels)
    throw ShapeError("train_dense_labeler: need one label per pixel");
  DenseLabeler dl = make_dense_labeler(cfg, rng);
  Adam opt(AdamConfig{fit.lr});
  const int batch = std::max(1, fit.batch);
  for (int epoch = 0; epoch < fit.epochs; ++epoch) {
    const std::vector<int> order = rng.permutation(static_cast<int>(n));
    for (Index start = 0; start < n; start += batch) {
      const Index m = std::min<Index>(batch, n - start);
      const Mat xb = gather(images, order, start, m);
      std::vector<int> yb(m * pixels);
      for (Index i = 0; i < m; ++i)
        for (int p = 0; p < pixels; ++p) yb[i * pixels + p] = pixel_labels[order[start + i] * pixels + p];
      opt.step(dl.params,
               grad([&](Tape&, const ParamVars& vars) { return cross_entropy(dense_classify(dl, vars, xb), yb); },
                    dl.params));
    }
  }
  return dl;
}

}  // namespace dusa::task
