#pragma once

#include <vector>

#include "dusa/csm.hpp"
#include "dusa/diffusion.hpp"
#include "dusa/optim.hpp"
#include "dusa/task_models.hpp"

namespace dusa {

/// Outcome of one evaluate-then-adapt step.
struct AdaptStepReport {
  std::vector<int> predictions;  // from the parameters before this step's update
  double loss = 0.0;
  long denoiser_forwards = 0;
  long denoiser_backwards = 0;  // conditional branches that send gradient into the denoiser
  IndexMat candidates;           // N x b selected classes (classification steps only)
  Mat candidate_probs;           // N x b posteriors over them, pre-update
};

enum class Mode { dusa, dusa_u };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& name);

// -- objectives --------------------------------------------------------------

/// sum_j probs(j) * preds[j].
Vec aggregate(const Vec& probs, const std::vector<Vec>& preds);

/// mean_i || target_i - sum_j probs(i, j) preds(i * b + j) ||^2.
/// probs: N x b, preds: (N * b) x d, target: N x d.
Var loss_dusa(const Mat& target, const Var& probs, const Var& preds);

/// Conditional term with the branch predictions detached plus the
/// unconditional term ||eps - uncond||^2; the first only reaches the task
/// model, the second only the denoiser.
Var loss_dusa_u(const Mat& eps, const Var& probs, const Var& cond_preds, const Var& uncond_preds);

/// Mean over pixels of ||eps_p - sum_j probs(p, j) maps_j[p]||^2.
/// eps: N x (P * C), pixel_probs: (N * P) x b, cond_maps: (N * b) x (P * C).
Var loss_dusa_seg(const Mat& eps, const Var& pixel_probs, const Var& cond_maps, Index channels);

/// loss_dusa against the x0 / v / epsilon target with branch predictions of
/// `pred_kind` converted to `kind` first.
Var loss_variant(diffusion::PredictionKind kind, diffusion::PredictionKind pred_kind, const Mat& x0,
                 const Mat& eps, const Mat& x_t, double alpha_bar, const Var& probs, const Var& preds);

// -- adaptation steps --------------------------------------------------------

struct AdaptConfig {
  int t = 100;
  csm::BudgetConfig budget{};
  Mode mode = Mode::dusa;
  diffusion::PredictionKind kind = diffusion::PredictionKind::epsilon;
  int accumulate = 1;  // micro-batches whose gradients are averaged into one update
};

/// Parameters of the task model and the denoiser under one name space.
ParamSet joint_params(const task::Classifier& clf, const diffusion::Denoiser& dn);
void scatter_params(const ParamSet& joint, task::Classifier& clf, diffusion::Denoiser& dn);

/// Loss of one DUSA step for fixed candidate indices and noise, as a function
/// of the joint parameters. Used by adapt_step and by gradient checks.
LossFn dusa_objective(const task::Classifier& clf, const diffusion::Denoiser& dn, const Mat& x0, const Mat& eps,
                      const IndexMat& candidates, const diffusion::NoiseSchedule& s, const AdaptConfig& cfg);

AdaptStepReport adapt_step(const Mat& batch, task::Classifier& clf, diffusion::Denoiser& dn,
                           const diffusion::NoiseSchedule& s, const AdaptConfig& cfg, Adam& opt, Rng& rng);

struct SegAdaptConfig {
  int t = 100;
  int budget = 20;
  Mode mode = Mode::dusa;
};

/// Image-level candidates: unique per-pixel top-1 classes, randomly thinned to
/// the budget or topped up from the remaining classes until it is reached.
std::vector<int> seg_candidates(const Mat& pixel_logits, int budget, Rng& rng);

LossFn dusa_seg_objective(const task::DenseLabeler& dl, const diffusion::Denoiser& dn, const Mat& images,
                          const Mat& eps, const std::vector<std::vector<int>>& candidates,
                          const diffusion::NoiseSchedule& s, const SegAdaptConfig& cfg);

AdaptStepReport adapt_step_seg(const Mat& images, task::DenseLabeler& dl, diffusion::Denoiser& dn,
                               const diffusion::NoiseSchedule& s, const SegAdaptConfig& cfg, Adam& opt, Rng& rng);

ParamSet joint_params(const task::DenseLabeler& dl, const diffusion::Denoiser& dn);
void scatter_params(const ParamSet& joint, task::DenseLabeler& dl, diffusion::Denoiser& dn);

}  // namespace dusa
