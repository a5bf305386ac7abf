#pragma once

#include "dusa/dusa.hpp"

namespace dusa::baselines {

/// Predictions only; nothing is updated.
AdaptStepReport source_only_step(const Mat& batch, const task::Classifier& clf);
AdaptStepReport source_only_step(const Mat& images, const task::DenseLabeler& dl);

LossFn entropy_objective(const task::Classifier& clf, const Mat& batch);

/// Mean softmax entropy of the batch, minimised over every classifier
/// parameter.
AdaptStepReport entropy_step(const Mat& batch, task::Classifier& clf, Adam& opt);
AdaptStepReport entropy_step(const Mat& images, task::DenseLabeler& dl, Adam& opt);

/// Soft-conditioned diffusion loss: the condition is sum_y p(y|x0) c_y over
/// all K classes and the loss is averaged over `timesteps.size() / N` draws
/// of (t, eps) per sample. timesteps and eps hold the draws of sample i in
/// rows i * n .. i * n + n - 1.
LossFn diffusion_tta_objective(const task::Classifier& clf, const diffusion::Denoiser& dn, const Mat& batch,
                               const std::vector<int>& timesteps, const Mat& eps, const diffusion::NoiseSchedule& s);

AdaptStepReport diffusion_tta_step(const Mat& batch, task::Classifier& clf, diffusion::Denoiser& dn,
                                   const diffusion::NoiseSchedule& s, int n_timesteps, Adam& opt, Rng& rng);

}  // namespace dusa::baselines
