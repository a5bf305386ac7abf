#include "dusa/baselines.hpp"

#include <cmath>

namespace dusa::baselines {

AdaptStepReport source_only_step(const Mat& batch, const task::Classifier& clf) {
  AdaptStepReport r;
  r.predictions = task::predict_rows(task::classify(clf, batch));
  return r;
}

AdaptStepReport source_only_step(const Mat& images, const task::DenseLabeler& dl) {
  AdaptStepReport r;
  r.predictions = task::predict_rows(task::dense_classify(dl, images));
  return r;
}

LossFn entropy_objective(const task::Classifier& clf, const Mat& batch) {
  return [&clf, batch](Tape&, const ParamVars& vars) { return task::mean_entropy(task::classify(clf, vars, batch)); };
}

AdaptStepReport entropy_step(const Mat& batch, task::Classifier& clf, Adam& opt) {
  AdaptStepReport r;
  r.predictions = task::predict_rows(task::classify(clf, batch));
  if (batch.rows() == 0) return r;
  const auto vg = value_and_grad(entropy_objective(clf, batch), clf.params);
  opt.step(clf.params, vg.grads);
  r.loss = vg.value;
  return r;
}

AdaptStepReport entropy_step(const Mat& images, task::DenseLabeler& dl, Adam& opt) {
  AdaptStepReport r;
  r.predictions = task::predict_rows(task::dense_classify(dl, images));
  if (images.rows() == 0) return r;
  const auto vg = value_and_grad(
      [&](Tape&, const ParamVars& vars) { return task::mean_entropy(task::dense_classify(dl, vars, images)); },
      dl.params);
  opt.step(dl.params, vg.grads);
  r.loss = vg.value;
  return r;
}

LossFn diffusion_tta_objective(const task::Classifier& clf, const diffusion::Denoiser& dn, const Mat& batch,
                               const std::vector<int>& timesteps, const Mat& eps, const diffusion::NoiseSchedule& s) {
  const Index n = batch.rows();
  if (n == 0 || timesteps.size() % static_cast<std::size_t>(n) != 0)
    throw ShapeError("diffusion_tta_objective: need the same number of draws for every sample");
  if (eps.rows() != static_cast<Index>(timesteps.size()) || eps.cols() != batch.cols())
    throw ShapeError("diffusion_tta_objective: one noise row per draw required");
  const Index draws = static_cast<Index>(timesteps.size()) / n;
  Mat x_t(eps.rows(), eps.cols());
  std::vector<int> owner(timesteps.size());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < draws; ++j) {
      const Index r = i * draws + j;
      const double ab = s.abar(timesteps[r]);
      x_t.row(r) = std::sqrt(ab) * batch.row(i) + std::sqrt(1.0 - ab) * eps.row(r);
      owner[r] = static_cast<int>(i);
    }
  return [&clf, &dn, batch, timesteps, eps, x_t, owner](Tape&, const ParamVars& vars) {
    const Var probs = softmax_rows(task::classify(clf, vars, batch));
    const Var pred = diffusion::denoise_soft(dn, vars, x_t, timesteps, gather_rows(probs, owner));
    return (1.0 / static_cast<double>(eps.rows())) * sum(square(eps - pred));
  };
}

AdaptStepReport diffusion_tta_step(const Mat& batch, task::Classifier& clf, diffusion::Denoiser& dn,
                                   const diffusion::NoiseSchedule& s, int n_timesteps, Adam& opt, Rng& rng) {
  if (n_timesteps < 1) throw std::invalid_argument("diffusion_tta_step: need at least one timestep");
  if (dn.config.kind != diffusion::PredictionKind::epsilon)
    throw std::invalid_argument("diffusion_tta_step: expects an epsilon-prediction denoiser");
  AdaptStepReport r;
  r.predictions = task::predict_rows(task::classify(clf, batch));
  const Index n = batch.rows();
  if (n == 0) return r;
  std::vector<int> t(static_cast<std::size_t>(n * n_timesteps));
  for (int& v : t) v = rng.uniform_int(1, s.steps);
  const Mat eps = rng.normal(n * n_timesteps, batch.cols());

  ParamSet joint = joint_params(clf, dn);
  const auto vg = value_and_grad(diffusion_tta_objective(clf, dn, batch, t, eps, s), joint);
  opt.step(joint, vg.grads);
  scatter_params(joint, clf, dn);
  r.loss = vg.value;
  r.denoiser_forwards = n * n_timesteps;
  r.denoiser_backwards = n * n_timesteps;
  return r;
}

}  // namespace dusa::baselines
