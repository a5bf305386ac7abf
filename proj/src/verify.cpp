#include "dusa/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "dusa/baselines.hpp"
#include "dusa/dusa.hpp"
#include "dusa/gmm.hpp"

namespace dusa::verify {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Tiny {
  task::Classifier clf;
  diffusion::Denoiser dn;
  diffusion::NoiseSchedule s = diffusion::linear_schedule();
};

Tiny tiny_models(Rng& rng, int dim = 3, int classes = 5) {
  Tiny m;
  m.clf = task::make_classifier({dim, classes, {6}}, rng, false);
  diffusion::DenoiserConfig dc;
  dc.dim = dim;
  dc.classes = classes;
  dc.time_dim = 4;
  dc.class_dim = 3;
  dc.hidden = {6};
  m.dn = diffusion::make_denoiser(dc, rng, false);
  return m;
}

// Plain-arithmetic value of the null-conditioned loss with the conditional
// branch outputs held at the denoiser parameters `frozen`. Its finite
// differences are the gradient the detached objective should produce.
LossFn dusa_u_reference(const Tiny& m, const ParamSet& frozen, const Mat& x0, const Mat& eps, const IndexMat& cand,
                        int t) {
  return [&m, frozen, x0, eps, cand, t](Tape& tape, const ParamVars& vars) {
    task::Classifier clf = m.clf;
    diffusion::Denoiser dn = m.dn, dn_frozen = m.dn;
    for (auto& [name, value] : clf.params) value = vars.at(name).value();
    for (auto& [name, value] : dn.params) value = vars.at(name).value();
    dn_frozen.params = frozen;
    const Mat x_t = diffusion::noisy_sample(x0, t, eps, m.s);
    const Mat logits = task::classify(clf, x0);
    double total = 0.0;
    for (Index i = 0; i < x0.rows(); ++i) {
      std::vector<int> idx;
      for (Index j = 0; j < cand.cols(); ++j) idx.push_back(cand(i, j));
      const Vec p = csm::probs_over(csm::logit_norm(logits.row(i)), idx);
      RowVec mix = RowVec::Zero(x0.cols());
      for (Index j = 0; j < cand.cols(); ++j) mix += p(j) * diffusion::denoise(dn_frozen, x_t.row(i), t, idx[j]);
      total += (eps.row(i) - mix).squaredNorm();
      total += (eps.row(i) - diffusion::denoise(dn, x_t.row(i), t, dn.null_label())).squaredNorm();
    }
    return tape.constant(Mat::Constant(1, 1, total / static_cast<double>(x0.rows())));
  };
}

}  // namespace

std::vector<Check> identity_suite(std::uint64_t seed, int mixtures, int points) {
  const int dims[] = {1, 2, 4, 8};
  const int ks[] = {2, 3, 5, 10};
  Rng rng(seed);
  const auto t0 = Clock::now();
  double worst_prop1 = 0.0, worst_tweedie = 0.0;
  for (int i = 0; i < mixtures; ++i) {
    const int d = dims[i % 4], k = ks[(i / 4) % 4];
    const gmm::Mixture m = gmm::random_mixture(k, d, rng);
    for (int p = 0; p < points; ++p) {
      Vec x(d);
      for (int j = 0; j < d; ++j) x(j) = 6.0 * rng.normal();
      worst_prop1 = std::max(worst_prop1, gmm::verify_prop1(m, x));
      const double abar = 0.001 + 0.998 * rng.uniform();
      worst_tweedie = std::max(worst_tweedie, gmm::verify_tweedie(m, abar, x));
    }
  }
  const double secs = since(t0);
  std::ostringstream n;
  n << mixtures << " mixtures x " << points << " points";
  return {{"prop1", worst_prop1 <= 1e-10, worst_prop1, n.str(), secs},
          {"tweedie", worst_tweedie <= 1e-9, worst_tweedie, n.str(), secs}};
}

Check mmse_suite(std::uint64_t seed, int triples, int trials, int samples) {
  Rng rng(seed);
  const auto t0 = Clock::now();
  int passed = 0;
  for (int i = 0; i < triples; ++i) {
    const int k = 2 + rng.uniform_int(0, 4);
    const int d = 1 + rng.uniform_int(0, 3);
    const gmm::Mixture m = gmm::random_mixture(k, d, rng);
    const double abar = 0.05 + 0.9 * rng.uniform();
    const gmm::Mixture dm = gmm::diffuse(m, abar);
    const gmm::LabeledSamples q = gmm::sample(dm, 1, rng);
    if (gmm::verify_mmse_optimality(m, abar, q.x.row(0).transpose(), trials, samples, rng)) ++passed;
  }
  std::ostringstream n;
  n << passed << "/" << triples << " triples";
  return {"mmse", passed == triples, static_cast<double>(passed), n.str(), since(t0)};
}

std::vector<Check> gradient_suite(std::uint64_t seed, int seeds, double tolerance) {
  std::vector<std::pair<std::string, double>> worst{
      {"loss_dusa", 0.0}, {"loss_dusa_u", 0.0}, {"loss_dusa_seg", 0.0}, {"entropy", 0.0}, {"diffusion_tta", 0.0}};
  const auto t0 = Clock::now();
  const double step = 1e-5;
  for (int r = 0; r < seeds; ++r) {
    Rng rng(splitmix64(seed + static_cast<std::uint64_t>(r)));
    Tiny m = tiny_models(rng);
    const Index n = 3;
    const Mat x0 = rng.normal(n, 3);
    const Mat eps = rng.normal(n, 3);
    AdaptConfig cfg;
    cfg.budget = {2, 1};
    const IndexMat cand = csm::select_rows(task::classify(m.clf, x0), cfg.budget, rng);
    const ParamSet joint = joint_params(m.clf, m.dn);
    worst[0].second = std::max(worst[0].second, grad_check(dusa_objective(m.clf, m.dn, x0, eps, cand, m.s, cfg), joint, step));
    cfg.mode = Mode::dusa_u;
    worst[1].second = std::max(
        worst[1].second,
        max_relative_error(grad(dusa_objective(m.clf, m.dn, x0, eps, cand, m.s, cfg), joint),
                           numeric_grad(dusa_u_reference(m, m.dn.params, x0, eps, cand, cfg.t), joint, step)));

    task::LabelerConfig lc{2, 2, 2, 3, 4, {5}};
    const task::DenseLabeler dl = task::make_dense_labeler(lc, rng, false);
    diffusion::DenoiserConfig gc;
    gc.dim = lc.pixels() * lc.channels;
    gc.classes = lc.classes;
    gc.time_dim = 4;
    gc.class_dim = 3;
    gc.hidden = {6};
    const diffusion::Denoiser gd = diffusion::make_denoiser(gc, rng, false);
    const Mat images = rng.normal(2, gc.dim), seg_eps = rng.normal(2, gc.dim);
    const std::vector<std::vector<int>> seg_cand{{0, 2}, {1, 2}};
    const SegAdaptConfig scfg{100, 2, Mode::dusa};
    worst[2].second = std::max(worst[2].second,
                               grad_check(dusa_seg_objective(dl, gd, images, seg_eps, seg_cand, m.s, scfg),
                                          joint_params(dl, gd), step));

    worst[3].second = std::max(worst[3].second, grad_check(baselines::entropy_objective(m.clf, x0), m.clf.params, step));

    std::vector<int> ts;
    for (int i = 0; i < n * 2; ++i) ts.push_back(rng.uniform_int(1, m.s.steps));
    const Mat tta_eps = rng.normal(n * 2, 3);
    worst[4].second = std::max(worst[4].second,
                               grad_check(baselines::diffusion_tta_objective(m.clf, m.dn, x0, ts, tta_eps, m.s), joint, step));
  }
  const double secs = since(t0);
  std::vector<Check> out;
  for (const auto& [name, err] : worst)
    out.push_back({"grad:" + name, err <= tolerance, err, std::to_string(seeds) + " seeds", secs});
  return out;
}

Check partition_check(std::uint64_t seed) {
  const auto t0 = Clock::now();
  Rng rng(seed);
  Tiny m = tiny_models(rng, 3, 8);
  const Index n = 4;
  const Mat x0 = rng.normal(n, 3), eps = rng.normal(n, 3);
  const csm::BudgetConfig budget{4, 2};
  const IndexMat cand = csm::select_rows(task::classify(m.clf, x0), budget, rng);
  const int t = 100;
  const Mat x_t = diffusion::noisy_sample(x0, t, eps, m.s);
  Mat x_rep(n * budget.budget(), 3);
  std::vector<int> cond;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < budget.budget(); ++j) {
      x_rep.row(i * budget.budget() + j) = x_t.row(i);
      cond.push_back(cand(i, j));
    }
  const ParamSet joint = joint_params(m.clf, m.dn);

  // which: 0 conditional term only, 1 unconditional term only.
  auto term = [&](int which) -> LossFn {
    return [&, which](Tape& tape, const ParamVars& vars) {
      Var probs = csm::candidate_probs(task::classify(m.clf, vars, x0), cand);
      Var preds = diffusion::denoise(m.dn, vars, x_rep, std::vector<int>(cond.size(), t), cond);
      Var uncond = diffusion::denoise(m.dn, vars, x_t, std::vector<int>(n, t), std::vector<int>(n, m.dn.null_label()));
      if (which == 0) return loss_dusa_u(eps, probs, preds, tape.constant(eps));
      return loss_dusa_u(eps, tape.constant(probs.value()), tape.constant(preds.value()), uncond);
    };
  };
  const ParamSet g_cond = grad(term(0), joint), g_uncond = grad(term(1), joint);
  double cond_phi = 0.0, uncond_theta = 0.0, cond_theta = 0.0, uncond_phi = 0.0;
  for (const auto& [name, g] : g_cond) {
    const double a = g.cwiseAbs().maxCoeff();
    if (name.rfind(diffusion::kDenoiserPrefix, 0) == 0) cond_phi = std::max(cond_phi, a);
    else cond_theta = std::max(cond_theta, a);
  }
  for (const auto& [name, g] : g_uncond) {
    const double a = g.cwiseAbs().maxCoeff();
    if (name.rfind(diffusion::kDenoiserPrefix, 0) == 0) uncond_phi = std::max(uncond_phi, a);
    else uncond_theta = std::max(uncond_theta, a);
  }

  task::Classifier clf = m.clf;
  diffusion::Denoiser dn = m.dn;
  Adam opt;
  AdaptConfig cfg;
  cfg.budget = budget;
  cfg.mode = Mode::dusa_u;
  const AdaptStepReport rep = adapt_step(x0, clf, dn, m.s, cfg, opt, rng);
  const double df = static_cast<double>(rep.denoiser_forwards) / n, db = static_cast<double>(rep.denoiser_backwards) / n;

  std::ostringstream d;
  d << "cond->phi " << cond_phi << ", uncond->theta " << uncond_theta << ", cond->theta " << cond_theta
    << ", uncond->phi " << uncond_phi << ", D.F. " << df << ", D.B. " << db;
  const bool pass = cond_phi == 0.0 && uncond_theta == 0.0 && cond_theta > 0.0 && uncond_phi > 0.0 && df == 7.0 &&
                    db == 1.0;
  return {"dusa_u_partition", pass, std::max(cond_phi, uncond_theta), d.str(), since(t0)};
}

}  // namespace dusa::verify
