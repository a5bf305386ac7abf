#pragma once

#include <complex>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "dusa/core.hpp"
#include "dusa/rng.hpp"
#include "json.hpp"

namespace dusa::gmm {

/// Smallest covariance eigenvalue accepted by Gaussian.
inline constexpr double kMinEigenvalue = 1e-9;

/// Multivariate normal with a cached Cholesky factor; every solve goes through
/// the factor.
class Gaussian {
 public:
  Gaussian(Vec mean, Mat covariance);

  Index dim() const { return mean_.size(); }
  const Vec& mean() const { return mean_; }
  const Mat& covariance() const { return cov_; }

  double log_density(const Vec& x) const;
  /// Analytic continuation to complex arguments, for complex-step derivatives.
  std::complex<double> log_density(const Eigen::VectorXcd& x) const;
  /// Gradient of log_density: -Sigma^{-1} (x - mu).
  Vec score(const Vec& x) const;
  /// Sigma^{-1} v.
  Vec solve(const Vec& v) const;
  Vec sample(Rng& rng) const;

 private:
  Vec mean_;
  Mat cov_;
  Eigen::LLT<Mat> llt_;
  Mat lower_;
  double log_det_ = 0.0;
};

struct Component {
  int label;
  Gaussian gaussian;
};

/// Labeled Gaussian mixture. Labels are a permutation of 0..K-1 and
/// weight(y) is indexed by label.
class Mixture {
 public:
  Mixture(std::vector<Component> components, Vec weights);

  int classes() const { return static_cast<int>(components_.size()); }
  Index dim() const { return components_.front().gaussian.dim(); }
  const std::vector<Component>& components() const { return components_; }
  const Gaussian& component(int label) const;
  double weight(int label) const { return weights_(label); }
  const Vec& weights() const { return weights_; }

 private:
  std::vector<Component> components_;
  std::vector<int> slot_;  // label -> position in components_
  Vec weights_;
};

/// log sum_i exp(v_i), stable for large magnitudes.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  const auto mx = v.maxCoeff();
  return mx + std::log((v.derived().array() - mx).exp().sum());
}

double log_density(const Mixture& m, const Vec& x);
Vec score(const Mixture& m, const Vec& x);
Vec conditional_score(const Mixture& m, int label, const Vec& x);
/// Bayes posterior over labels, indexed by label.
Vec posterior(const Mixture& m, const Vec& x);

/// Exact per-class law of sqrt(abar) x0 + sqrt(1 - abar) eps.
Mixture diffuse(const Mixture& m, double alpha_bar);

/// MMSE predictor E[eps | x_t] (or E[eps | x_t, y] when a label is given).
Vec expected_noise(const Mixture& m, double alpha_bar, const Vec& x_t, std::optional<int> label = std::nullopt);

/// E[x0 | x_t, y] for the conjugate Gaussian component.
Vec posterior_clean_mean(const Mixture& m, int label, double alpha_bar, const Vec& x_t);
/// Cov[x0 | x_t, y].
Mat posterior_clean_cov(const Mixture& m, int label, double alpha_bar);

/// Gradient of log_density(m, .) by complex-step differentiation. Shares no
/// code path with the posterior-weighted score.
Vec score_complex_step(const Mixture& m, const Vec& x);

/// ||grad log p(x) - sum_y p(y|x) score_y|| / (1 + ||grad log p(x)||), the
/// left side taken by complex step.
double verify_prop1(const Mixture& m, const Vec& x);

/// Relative gap between the conjugate-posterior mean of sqrt(abar) x0 and
/// x_t + (1 - abar) * grad log p_t(x_t), the gradient taken by complex step.
double verify_tweedie(const Mixture& m, double alpha_bar, const Vec& x_t);

/// Monte-Carlo check that posterior weights minimise
/// E||eps - sum_y w_y eps*_y(x_t)||^2 over `trials` random simplex weights.
bool verify_mmse_optimality(const Mixture& m, double alpha_bar, const Vec& x_t, int trials, int samples, Rng& rng);

struct MixtureOptions {
  double radius = 4.0;     // means uniform on this sphere
  double cov_scale = 1.0;  // entries of A ~ N(0, cov_scale^2)
  double cov_floor = 0.5;  // covariance = A A^T + cov_floor I
};

Mixture random_mixture(int classes, int dim, Rng& rng, const MixtureOptions& opts = {});

struct LabeledSamples {
  Mat x;  // one sample per row
  std::vector<int> y;
};

LabeledSamples sample(const Mixture& m, Index n, Rng& rng);

nlohmann::json to_json(const Mixture& m);
Mixture mixture_from_json(const nlohmann::json& doc);

}  // namespace dusa::gmm
