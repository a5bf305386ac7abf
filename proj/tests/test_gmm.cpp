#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dusa/gmm.hpp"

using namespace dusa;
using namespace dusa::gmm;

namespace {

double npdf(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

Mixture one_d(std::vector<double> means, std::vector<double> vars, std::vector<double> w) {
  std::vector<Component> comps;
  for (std::size_t i = 0; i < means.size(); ++i)
    comps.push_back({static_cast<int>(i), Gaussian(Vec::Constant(1, means[i]), Mat::Constant(1, 1, vars[i]))});
  return Mixture(comps, Eigen::Map<Vec>(w.data(), static_cast<Index>(w.size())));
}

// Trapezoid over a wide grid; integrand(x0) already includes the prior.
template <typename F>
double integrate(F f, double lo, double hi, int n = 200000) {
  const double h = (hi - lo) / n;
  double s = 0.5 * (f(lo) + f(hi));
  for (int i = 1; i < n; ++i) s += f(lo + i * h);
  return s * h;
}

}  // namespace

TEST(Gaussian, OneDimensionalDensity) {
  const Gaussian g(Vec::Constant(1, 1.5), Mat::Constant(1, 1, 2.0));
  for (double x : {-3.0, 0.0, 1.5, 4.2}) EXPECT_NEAR(g.log_density(Vec(Vec::Constant(1, x))), std::log(npdf(x, 1.5, 2.0)), 1e-13);
}

TEST(Gaussian, RejectsBadCovariance) {
  Mat asym(2, 2);
  asym << 1, 0.5, 0.0, 1;
  EXPECT_THROW(Gaussian(Vec::Zero(2), asym), std::invalid_argument);
  EXPECT_THROW(Gaussian(Vec::Zero(2), Mat::Zero(2, 2)), std::invalid_argument);
  EXPECT_THROW(Gaussian(Vec::Zero(3), Mat::Identity(2, 2)), std::exception);
}

TEST(Gaussian, SampleMoments) {
  Rng rng(4);
  Mat cov(2, 2);
  cov << 2.0, 0.6, 0.6, 0.5;
  const Gaussian g((Vec(2) << 1, -1).finished(), cov);
  Mat s(2, 100000);
  for (int i = 0; i < s.cols(); ++i) s.col(i) = g.sample(rng);
  const Vec mu = s.rowwise().mean();
  const Mat c = (s.colwise() - mu) * (s.colwise() - mu).transpose() / (s.cols() - 1.0);
  EXPECT_NEAR(mu(0), 1.0, 0.02);
  EXPECT_NEAR(mu(1), -1.0, 0.01);
  EXPECT_LT((c - cov).cwiseAbs().maxCoeff(), 0.03);
}

TEST(Mixture, Validation) {
  std::vector<Component> comps{{0, Gaussian(Vec::Zero(1), Mat::Identity(1, 1))},
                               {1, Gaussian(Vec::Ones(1), Mat::Identity(1, 1))}};
  EXPECT_THROW(Mixture(comps, (Vec(2) << 0.5, 0.6).finished()), std::invalid_argument);
  EXPECT_THROW(Mixture(comps, (Vec(2) << 1.5, -0.5).finished()), std::invalid_argument);
  std::vector<Component> bad{{0, comps[0].gaussian}, {2, comps[1].gaussian}};
  EXPECT_THROW(Mixture(bad, (Vec(2) << 0.5, 0.5).finished()), std::invalid_argument);
  // Labels may be stored out of order; weights follow labels.
  std::vector<Component> swapped{{1, comps[1].gaussian}, {0, comps[0].gaussian}};
  const Mixture m(swapped, (Vec(2) << 0.3, 0.7).finished());
  EXPECT_DOUBLE_EQ(m.weight(0), 0.3);
  EXPECT_DOUBLE_EQ(m.component(1).mean()(0), 1.0);
}

TEST(Mixture, ScoreMatchesFiniteDifferences) {
  Rng rng(2);
  const Mixture m = random_mixture(4, 3, rng);
  for (int trial = 0; trial < 20; ++trial) {
    Vec x(3);
    for (int j = 0; j < 3; ++j) x(j) = 3.0 * rng.normal();
    const Vec s = score(m, x);
    for (int j = 0; j < 3; ++j) {
      Vec up = x, dn = x;
      up(j) += 1e-5;
      dn(j) -= 1e-5;
      EXPECT_NEAR(s(j), (log_density(m, up) - log_density(m, dn)) / 2e-5, 1e-6 * (1.0 + std::abs(s(j))));
    }
    EXPECT_LT((score_complex_step(m, x) - s).norm(), 1e-12 * (1.0 + s.norm()));
  }
}

TEST(Mixture, PosteriorIsBayesRule) {
  const Mixture m = one_d({-1.0, 2.0, 0.5}, {1.0, 0.5, 2.0}, {0.2, 0.5, 0.3});
  for (double x : {-2.0, 0.0, 1.0, 3.0}) {
    const double j0 = 0.2 * npdf(x, -1, 1), j1 = 0.5 * npdf(x, 2, 0.5), j2 = 0.3 * npdf(x, 0.5, 2);
    const Vec p = posterior(m, Vec::Constant(1, x));
    EXPECT_NEAR(p(0), j0 / (j0 + j1 + j2), 1e-14);
    EXPECT_NEAR(p(1), j1 / (j0 + j1 + j2), 1e-14);
    EXPECT_NEAR(p.sum(), 1.0, 1e-15);
    EXPECT_NEAR(log_density(m, Vec::Constant(1, x)), std::log(j0 + j1 + j2), 1e-13);
  }
}

TEST(Mixture, PosteriorStableFarFromData) {
  Rng rng(9);
  const Mixture m = random_mixture(5, 4, rng);
  const Vec p = posterior(m, Vec::Constant(4, 400.0));
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(Diffusion, DiffusedMomentsMatchMonteCarlo) {
  Rng rng(3);
  const Mixture m = random_mixture(2, 2, rng);
  const double ab = 0.6;
  const Mixture dm = diffuse(m, ab);
  const Gaussian& g = m.component(1);
  const int n = 200000;
  Mat s(2, n);
  for (int i = 0; i < n; ++i) {
    Vec e(2);
    e << rng.normal(), rng.normal();
    s.col(i) = std::sqrt(ab) * g.sample(rng) + std::sqrt(1 - ab) * e;
  }
  const Vec mu = s.rowwise().mean();
  const Mat c = (s.colwise() - mu) * (s.colwise() - mu).transpose() / (n - 1.0);
  EXPECT_LT((mu - dm.component(1).mean()).norm(), 0.03);
  EXPECT_LT((c - dm.component(1).covariance()).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_THROW(diffuse(m, 0.0), std::domain_error);
  EXPECT_THROW(diffuse(m, 1.5), std::domain_error);
}

TEST(Diffusion, ConjugatePosteriorAgainstQuadrature) {
  const Mixture m = one_d({1.0}, {0.7}, {1.0});
  const double ab = 0.4, xt = 1.3, sa = std::sqrt(ab);
  auto joint = [&](double x0) { return npdf(x0, 1.0, 0.7) * npdf(xt, sa * x0, 1 - ab); };
  const double z = integrate(joint, -15, 15);
  const double mean = integrate([&](double x) { return x * joint(x); }, -15, 15) / z;
  const double second = integrate([&](double x) { return x * x * joint(x); }, -15, 15) / z;
  EXPECT_NEAR(posterior_clean_mean(m, 0, ab, Vec::Constant(1, xt))(0), mean, 1e-9);
  EXPECT_NEAR(posterior_clean_cov(m, 0, ab)(0, 0), second - mean * mean, 1e-9);
}

TEST(Diffusion, ExpectedNoiseAgainstQuadrature) {
  // E[eps | x_t] = (x_t - sqrt(abar) E[x0 | x_t]) / sqrt(1 - abar) under the
  // mixture prior, integrated directly.
  const Mixture m = one_d({-2.0, 1.0, 3.0}, {0.5, 1.0, 0.3}, {0.3, 0.5, 0.2});
  const double ab = 0.7, sa = std::sqrt(ab), sn = std::sqrt(1 - ab);
  for (double xt : {-1.5, 0.2, 2.4}) {
    auto prior = [&](double x) { return 0.3 * npdf(x, -2, 0.5) + 0.5 * npdf(x, 1, 1) + 0.2 * npdf(x, 3, 0.3); };
    auto joint = [&](double x0) { return prior(x0) * npdf(xt, sa * x0, 1 - ab); };
    const double z = integrate(joint, -20, 20);
    const double mean = integrate([&](double x) { return x * joint(x); }, -20, 20) / z;
    EXPECT_NEAR(expected_noise(m, ab, Vec::Constant(1, xt))(0), (xt - sa * mean) / sn, 1e-8);
    // Conditional version uses only component 1.
    auto joint1 = [&](double x0) { return npdf(x0, 1, 1) * npdf(xt, sa * x0, 1 - ab); };
    const double m1 = integrate([&](double x) { return x * joint1(x); }, -20, 20) / integrate(joint1, -20, 20);
    EXPECT_NEAR(expected_noise(m, ab, Vec::Constant(1, xt), 1)(0), (xt - sa * m1) / sn, 1e-8);
  }
  EXPECT_THROW(expected_noise(m, 1.0, Vec::Zero(1)), std::domain_error);
}

TEST(Identities, Prop1AndTweedieResiduals) {
  Rng rng(12);
  for (int d : {1, 2, 4, 8}) {
    for (int k : {2, 3, 5, 10}) {
      const Mixture m = random_mixture(k, d, rng);
      for (int i = 0; i < 10; ++i) {
        Vec x(d);
        for (int j = 0; j < d; ++j) x(j) = 5.0 * rng.normal();
        EXPECT_LE(verify_prop1(m, x), 1e-10);
        EXPECT_LE(verify_tweedie(m, 0.05 + 0.9 * rng.uniform(), x), 1e-9);
      }
    }
  }
}

TEST(Identities, SingleComponentTweedieIsExact) {
  const Mixture m = one_d({0.5}, {2.0}, {1.0});
  EXPECT_LE(verify_tweedie(m, 0.3, Vec::Constant(1, -0.7)), 1e-14);
}

TEST(Identities, MmseOptimality) {
  Rng rng(21);
  const Mixture m = random_mixture(3, 2, rng);
  const Vec xt = sample(diffuse(m, 0.5), 1, rng).x.row(0).transpose();
  EXPECT_TRUE(verify_mmse_optimality(m, 0.5, xt, 20, 20000, rng));
}

TEST(Sampling, ClassFrequenciesWithinThreeStandardErrors) {
  Rng rng(5);
  const Mixture m = random_mixture(6, 2, rng);
  const Index n = 60000;
  const LabeledSamples s = sample(m, n, rng);
  std::vector<int> counts(6, 0);
  for (int y : s.y) ++counts[y];
  for (int y = 0; y < 6; ++y) {
    const double w = m.weight(y), se = std::sqrt(w * (1 - w) / n);
    EXPECT_LE(std::abs(counts[y] / static_cast<double>(n) - w), 3 * se + 1e-12) << "class " << y;
  }
}

TEST(Serialisation, JsonRoundTripIsExact) {
  Rng rng(6);
  const Mixture m = random_mixture(4, 3, rng);
  const Mixture back = mixture_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.classes(), 4);
  for (int y = 0; y < 4; ++y) {
    EXPECT_EQ(back.weight(y), m.weight(y));
    EXPECT_TRUE(back.component(y).mean() == m.component(y).mean());
    EXPECT_TRUE(back.component(y).covariance() == m.component(y).covariance());
  }
}
