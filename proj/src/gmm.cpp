#include "dusa/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

namespace dusa::gmm {

namespace {

void check_dim(const Mixture& m, const Vec& x) {
  if (x.size() != m.dim())
    throw ShapeError("mixture has dimension " + std::to_string(m.dim()) + ", got a vector of size " +
                     std::to_string(x.size()));
}

void check_alpha_open(double alpha_bar, const char* op) {
  if (!(alpha_bar > 0.0 && alpha_bar < 1.0))
    throw std::domain_error(std::string(op) + ": alpha_bar must lie in (0, 1)");
}

Vec log_joint(const Mixture& m, const Vec& x) {
  Vec lj(m.classes());
  for (int y = 0; y < m.classes(); ++y) lj(y) = std::log(m.weight(y)) + m.component(y).log_density(x);
  return lj;
}

}  // namespace

// -- Gaussian ----------------------------------------------------------------

Gaussian::Gaussian(Vec mean, Mat covariance) : mean_(std::move(mean)), cov_(std::move(covariance)) {
  const Index d = mean_.size();
  if (d == 0) throw ShapeError("Gaussian: empty mean");
  if (cov_.rows() != d || cov_.cols() != d) throw ShapeError("Gaussian: covariance must be d x d");
  const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("Gaussian: covariance is not symmetric");
  cov_ = 0.5 * (cov_ + cov_.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < kMinEigenvalue)
    throw std::invalid_argument("Gaussian: covariance smallest eigenvalue below 1e-9");
  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success) throw std::invalid_argument("Gaussian: Cholesky factorisation failed");
  lower_ = llt_.matrixL();
  log_det_ = 2.0 * lower_.diagonal().array().log().sum();
}

double Gaussian::log_density(const Vec& x) const {
  const Vec z = llt_.matrixL().solve(x - mean_);
  const double d = static_cast<double>(dim());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det_ + z.squaredNorm());
}

std::complex<double> Gaussian::log_density(const Eigen::VectorXcd& x) const {
  const Eigen::VectorXcd diff = x - mean_.cast<std::complex<double>>();
  const Eigen::MatrixXcd lower = lower_.cast<std::complex<double>>();
  const Eigen::VectorXcd z = lower.triangularView<Eigen::Lower>().solve(diff);
  const double d = static_cast<double>(dim());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det_ + (z.transpose() * z)(0));
}

Vec Gaussian::score(const Vec& x) const { return -llt_.solve(x - mean_); }

Vec Gaussian::solve(const Vec& v) const { return llt_.solve(v); }

Vec Gaussian::sample(Rng& rng) const {
  Vec z(dim());
  for (Index i = 0; i < dim(); ++i) z(i) = rng.normal();
  return mean_ + lower_ * z;
}

// -- Mixture -----------------------------------------------------------------

Mixture::Mixture(std::vector<Component> components, Vec weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  const int k = static_cast<int>(components_.size());
  if (k == 0) throw std::invalid_argument("Mixture: no components");
  if (weights_.size() != k) throw ShapeError("Mixture: need one weight per component");
  if ((weights_.array() < 0.0).any()) throw std::invalid_argument("Mixture: negative weight");
  if (std::abs(weights_.sum() - 1.0) > 1e-12) throw std::invalid_argument("Mixture: weights must sum to 1");
  slot_.assign(k, -1);
  for (int i = 0; i < k; ++i) {
    const int y = components_[i].label;
    if (y < 0 || y >= k) throw std::invalid_argument("Mixture: label outside [0, K)");
    if (slot_[y] != -1) throw std::invalid_argument("Mixture: duplicate label");
    slot_[y] = i;
    if (components_[i].gaussian.dim() != components_.front().gaussian.dim())
      throw ShapeError("Mixture: components differ in dimension");
  }
}

const Gaussian& Mixture::component(int label) const {
  if (label < 0 || label >= classes()) throw std::out_of_range("Mixture: unknown label " + std::to_string(label));
  return components_[slot_[label]].gaussian;
}

// -- densities and scores ----------------------------------------------------

double log_density(const Mixture& m, const Vec& x) {
  check_dim(m, x);
  return log_sum_exp(log_joint(m, x));
}

Vec posterior(const Mixture& m, const Vec& x) {
  check_dim(m, x);
  const Vec lj = log_joint(m, x);
  return (lj.array() - log_sum_exp(lj)).exp().matrix();
}

Vec conditional_score(const Mixture& m, int label, const Vec& x) {
  check_dim(m, x);
  return m.component(label).score(x);
}

Vec score(const Mixture& m, const Vec& x) {
  const Vec post = posterior(m, x);
  Vec s = Vec::Zero(m.dim());
  for (int y = 0; y < m.classes(); ++y) s += post(y) * m.component(y).score(x);
  return s;
}

Mixture diffuse(const Mixture& m, double alpha_bar) {
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw std::domain_error("diffuse: alpha_bar must lie in (0, 1]");
  std::vector<Component> comps;
  const Mat eye = Mat::Identity(m.dim(), m.dim());
  for (const Component& c : m.components()) {
    const Gaussian& g = c.gaussian;
    comps.push_back({c.label, Gaussian(std::sqrt(alpha_bar) * g.mean(),
                                       alpha_bar * g.covariance() + (1.0 - alpha_bar) * eye)});
  }
  return Mixture(std::move(comps), m.weights());
}

Vec expected_noise(const Mixture& m, double alpha_bar, const Vec& x_t, std::optional<int> label) {
  check_alpha_open(alpha_bar, "expected_noise");
  check_dim(m, x_t);
  const Mixture dm = diffuse(m, alpha_bar);
  const Vec s = label ? dm.component(*label).score(x_t) : score(dm, x_t);
  return -std::sqrt(1.0 - alpha_bar) * s;
}

Vec posterior_clean_mean(const Mixture& m, int label, double alpha_bar, const Vec& x_t) {
  const Gaussian& g = m.component(label);
  const double sa = std::sqrt(alpha_bar);
  const Mat eye = Mat::Identity(m.dim(), m.dim());
  const Mat noisy_cov = alpha_bar * g.covariance() + (1.0 - alpha_bar) * eye;
  return g.mean() + sa * g.covariance() * noisy_cov.llt().solve(x_t - sa * g.mean());
}

Mat posterior_clean_cov(const Mixture& m, int label, double alpha_bar) {
  const Gaussian& g = m.component(label);
  const Mat eye = Mat::Identity(m.dim(), m.dim());
  const Mat noisy_cov = alpha_bar * g.covariance() + (1.0 - alpha_bar) * eye;
  Mat c = g.covariance() - alpha_bar * g.covariance() * noisy_cov.llt().solve(g.covariance());
  return 0.5 * (c + c.transpose());
}

// -- identity checks ---------------------------------------------------------

Vec score_complex_step(const Mixture& m, const Vec& x) {
  check_dim(m, x);
  const double h = 1e-30;
  Vec g(m.dim());
  std::vector<std::complex<double>> lj(static_cast<std::size_t>(m.classes()));
  for (Index j = 0; j < m.dim(); ++j) {
    Eigen::VectorXcd xc = x.cast<std::complex<double>>();
    xc(j) += std::complex<double>(0.0, h);
    double top = -std::numeric_limits<double>::infinity();
    for (int y = 0; y < m.classes(); ++y) {
      lj[y] = std::log(m.weight(y)) + m.component(y).log_density(xc);
      top = std::max(top, lj[y].real());
    }
    std::complex<double> acc = 0.0;
    for (const auto& v : lj) acc += std::exp(v - top);
    g(j) = (top + std::log(acc)).imag() / h;
  }
  return g;
}

double verify_prop1(const Mixture& m, const Vec& x) {
  const Vec lhs = score_complex_step(m, x);
  const Vec post = posterior(m, x);
  Vec rhs = Vec::Zero(m.dim());
  for (int y = 0; y < m.classes(); ++y) rhs += post(y) * conditional_score(m, y, x);
  return (lhs - rhs).norm() / (1.0 + lhs.norm());
}

double verify_tweedie(const Mixture& m, double alpha_bar, const Vec& x_t) {
  check_alpha_open(alpha_bar, "verify_tweedie");
  check_dim(m, x_t);
  const Mixture dm = diffuse(m, alpha_bar);
  const Vec post = posterior(dm, x_t);
  Vec lhs = Vec::Zero(m.dim());
  for (int y = 0; y < m.classes(); ++y)
    lhs += post(y) * std::sqrt(alpha_bar) * posterior_clean_mean(m, y, alpha_bar, x_t);
  const Vec rhs = x_t + (1.0 - alpha_bar) * score_complex_step(dm, x_t);
  return (lhs - rhs).norm() / (1.0 + rhs.norm());
}

bool verify_mmse_optimality(const Mixture& m, double alpha_bar, const Vec& x_t, int trials, int samples,
                            Rng& rng) {
  check_alpha_open(alpha_bar, "verify_mmse_optimality");
  check_dim(m, x_t);
  const int k = m.classes();
  if (k == 1) return true;
  const Index d = m.dim();
  const Mixture dm = diffuse(m, alpha_bar);
  const Vec post = posterior(dm, x_t);

  Mat branch(d, k);  // per-class MMSE noise predictors
  for (int y = 0; y < k; ++y) branch.col(y) = expected_noise(m, alpha_bar, x_t, y);

  // Draws of eps given x_t: y ~ p(y | x_t), x0 ~ p(x0 | x_t, y).
  std::vector<Eigen::LLT<Mat>> post_chol;
  std::vector<Vec> post_mean;
  for (int y = 0; y < k; ++y) {
    post_mean.push_back(posterior_clean_mean(m, y, alpha_bar, x_t));
    Mat c = posterior_clean_cov(m, y, alpha_bar) + 1e-14 * Mat::Identity(d, d);
    post_chol.emplace_back(c);
  }
  const std::vector<double> pw(post.data(), post.data() + k);
  Mat eps(d, samples);
  const double sa = std::sqrt(alpha_bar), sn = std::sqrt(1.0 - alpha_bar);
  for (int i = 0; i < samples; ++i) {
    const int y = rng.categorical(pw);
    Vec z(d);
    for (Index j = 0; j < d; ++j) z(j) = rng.normal();
    const Vec x0 = post_mean[y] + Mat(post_chol[y].matrixL()) * z;
    eps.col(i) = (x_t - sa * x0) / sn;
  }

  const Vec best = branch * post;
  const Vec base = (eps.colwise() - best).colwise().squaredNorm().transpose();
  for (int trial = 0; trial < trials; ++trial) {
    const double mix = 0.05 + 0.95 * rng.uniform();
    const Vec w = (1.0 - mix) * post + mix * rng.dirichlet(k, 1.0);
    const Vec other = (eps.colwise() - branch * w).colwise().squaredNorm().transpose();
    const Vec diff = base - other;  // negative when posterior weights win
    const double mean = diff.mean();
    const double var = (diff.array() - mean).square().sum() / (samples - 1);
    const double se = std::sqrt(var / samples);
    if (mean > 3.0 * se) return false;
  }
  return true;
}

// -- generation and sampling -------------------------------------------------

Mixture random_mixture(int classes, int dim, Rng& rng, const MixtureOptions& opts) {
  if (classes < 1 || dim < 1) throw std::invalid_argument("random_mixture: need classes >= 1 and dim >= 1");
  std::vector<Component> comps;
  for (int y = 0; y < classes; ++y) {
    Vec u(dim);
    for (int i = 0; i < dim; ++i) u(i) = rng.normal();
    u *= opts.radius / u.norm();
    Mat a = opts.cov_scale * rng.normal(dim, dim);
    Mat cov = a * a.transpose() + opts.cov_floor * Mat::Identity(dim, dim);
    comps.push_back({y, Gaussian(std::move(u), 0.5 * (cov + cov.transpose()))});
  }
  return Mixture(std::move(comps), rng.dirichlet(classes, 1.0));
}

LabeledSamples sample(const Mixture& m, Index n, Rng& rng) {
  LabeledSamples out;
  out.x.resize(n, m.dim());
  out.y.resize(n);
  const std::vector<double> w(m.weights().data(), m.weights().data() + m.classes());
  for (Index i = 0; i < n; ++i) {
    const int y = rng.categorical(w);
    out.y[i] = y;
    out.x.row(i) = m.component(y).sample(rng).transpose();
  }
  return out;
}

// -- serialisation -----------------------------------------------------------

nlohmann::json to_json(const Mixture& m) {
  nlohmann::json doc;
  doc["dim"] = m.dim();
  doc["weights"] = std::vector<double>(m.weights().data(), m.weights().data() + m.classes());
  auto& comps = doc["components"] = nlohmann::json::array();
  for (const Component& c : m.components()) {
    nlohmann::json jc;
    jc["label"] = c.label;
    jc["mean"] = std::vector<double>(c.gaussian.mean().data(), c.gaussian.mean().data() + m.dim());
    auto& rows = jc["covariance"] = nlohmann::json::array();
    for (Index r = 0; r < m.dim(); ++r) {
      std::vector<double> row(m.dim());
      for (Index k = 0; k < m.dim(); ++k) row[k] = c.gaussian.covariance()(r, k);
      rows.push_back(row);
    }
    comps.push_back(std::move(jc));
  }
  return doc;
}

Mixture mixture_from_json(const nlohmann::json& doc) {
  const auto weights = doc.at("weights").get<std::vector<double>>();
  std::vector<Component> comps;
  for (const auto& jc : doc.at("components")) {
    const auto mean = jc.at("mean").get<std::vector<double>>();
    const auto rows = jc.at("covariance").get<std::vector<std::vector<double>>>();
    const Index d = static_cast<Index>(mean.size());
    if (static_cast<Index>(rows.size()) != d) throw ShapeError("mixture document: covariance rows != dimension");
    Mat cov(d, d);
    for (Index r = 0; r < d; ++r) {
      if (static_cast<Index>(rows[r].size()) != d) throw ShapeError("mixture document: ragged covariance");
      for (Index k = 0; k < d; ++k) cov(r, k) = rows[r][k];
    }
    comps.push_back({jc.at("label").get<int>(), Gaussian(Eigen::Map<const Vec>(mean.data(), d), std::move(cov))});
  }
  Vec w = Eigen::Map<const Vec>(weights.data(), static_cast<Index>(weights.size()));
  return Mixture(std::move(comps), std::move(w));
}

}  // namespace dusa::gmm
