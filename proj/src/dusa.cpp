#include "dusa/dusa.hpp"

#include <algorithm>
#include <cmath>

namespace dusa {

using diffusion::PredictionKind;

std::string to_string(Mode mode) { return mode == Mode::dusa ? "dusa" : "dusa_u"; }

Mode parse_mode(const std::string& name) {
  if (name == "dusa") return Mode::dusa;
  if (name == "dusa_u") return Mode::dusa_u;
  throw std::invalid_argument("unknown DUSA mode '" + name + "'");
}

// -- objectives --------------------------------------------------------------

Vec aggregate(const Vec& probs, const std::vector<Vec>& preds) {
  if (static_cast<std::size_t>(probs.size()) != preds.size() || preds.empty())
    throw ShapeError("aggregate: need one prediction per probability");
  Vec out = Vec::Zero(preds.front().size());
  for (std::size_t j = 0; j < preds.size(); ++j) {
    if (preds[j].size() != out.size()) throw ShapeError("aggregate: predictions differ in length");
    out += probs(static_cast<Index>(j)) * preds[j];
  }
  return out;
}

Var loss_dusa(const Mat& target, const Var& probs, const Var& preds) {
  if (probs.rows() != target.rows()) throw ShapeError("loss_dusa: one probability row per sample required");
  if (preds.cols() != target.cols()) throw ShapeError("loss_dusa: prediction width differs from target");
  const Var agg = weighted_row_sum(probs, preds);
  return (1.0 / static_cast<double>(target.rows())) * sum(square(target - agg));
}

Var loss_dusa_u(const Mat& eps, const Var& probs, const Var& cond_preds, const Var& uncond_preds) {
  if (uncond_preds.rows() != eps.rows() || uncond_preds.cols() != eps.cols())
    throw ShapeError("loss_dusa_u: unconditional prediction shape differs from eps");
  const Var cond = loss_dusa(eps, probs, stop_gradient(cond_preds));
  const Var uncond = (1.0 / static_cast<double>(eps.rows())) * sum(square(eps - uncond_preds));
  return cond + uncond;
}

Var loss_dusa_seg(const Mat& eps, const Var& pixel_probs, const Var& cond_maps, Index channels) {
  if (cond_maps.cols() != eps.cols()) throw ShapeError("loss_dusa_seg: map width differs from eps");
  if (channels <= 0 || eps.cols() % channels != 0) throw ShapeError("loss_dusa_seg: bad channel count");
  const Index pixels = eps.cols() / channels;
  if (pixel_probs.rows() != eps.rows() * pixels) throw ShapeError("loss_dusa_seg: need one probability row per pixel");
  if (cond_maps.rows() != eps.rows() * pixel_probs.cols())
    throw ShapeError("loss_dusa_seg: need one map per image and candidate");
  const Var agg = pixel_weighted_sum(pixel_probs, cond_maps, channels);
  return (1.0 / static_cast<double>(eps.rows() * pixels)) * sum(square(eps - agg));
}

namespace {

/// Repeats each row of `x` `times` times consecutively.
Mat repeat_rows(const Mat& x, Index times) {
  Mat out(x.rows() * times, x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.middleRows(i * times, times) = x.row(i).replicate(times, 1);
  return out;
}

Var convert_rows(PredictionKind from, PredictionKind to, const Var& preds, const Mat& x_t_rows, double ab) {
  return diffusion::convert_prediction(from, to, preds, x_t_rows, ab);
}

}  // namespace

Var loss_variant(PredictionKind kind, PredictionKind pred_kind, const Mat& x0, const Mat& eps, const Mat& x_t,
                 double alpha_bar, const Var& probs, const Var& preds) {
  const Mat target = diffusion::prediction_target(kind, x0, eps, alpha_bar);
  if (kind == pred_kind) return loss_dusa(target, probs, preds);
  return loss_dusa(target, probs, convert_rows(pred_kind, kind, preds, repeat_rows(x_t, probs.cols()), alpha_bar));
}

// -- parameter plumbing ------------------------------------------------------

ParamSet joint_params(const task::Classifier& clf, const diffusion::Denoiser& dn) { return merge(clf.params, dn.params); }

void scatter_params(const ParamSet& joint, task::Classifier& clf, diffusion::Denoiser& dn) {
  for (auto& [name, value] : clf.params) value = joint.at(name);
  for (auto& [name, value] : dn.params) value = joint.at(name);
}

ParamSet joint_params(const task::DenseLabeler& dl, const diffusion::Denoiser& dn) { return merge(dl.params, dn.params); }

void scatter_params(const ParamSet& joint, task::DenseLabeler& dl, diffusion::Denoiser& dn) {
  for (auto& [name, value] : dl.params) value = joint.at(name);
  for (auto& [name, value] : dn.params) value = joint.at(name);
}

namespace {

void accumulate_into(ParamSet& total, const ParamSet& part, double weight) {
  for (const auto& [name, g] : part) {
    auto it = total.find(name);
    if (it == total.end())
      total.emplace(name, weight * g);
    else
      it->second += weight * g;
  }
}

void check_timestep(int t, const diffusion::NoiseSchedule& s) {
  if (t < 1 || t > s.steps)
    throw std::out_of_range("adaptation timestep " + std::to_string(t) + " outside [1, " + std::to_string(s.steps) + "]");
}

Mat rows_of(const Mat& x, Index start, Index count) { return x.middleRows(start, count); }

IndexMat rows_of(const IndexMat& x, Index start, Index count) { return x.middleRows(start, count); }

}  // namespace

// -- classification ----------------------------------------------------------

LossFn dusa_objective(const task::Classifier& clf, const diffusion::Denoiser& dn, const Mat& x0, const Mat& eps,
                      const IndexMat& candidates, const diffusion::NoiseSchedule& s, const AdaptConfig& cfg) {
  check_timestep(cfg.t, s);
  if (candidates.rows() != x0.rows()) throw ShapeError("dusa_objective: one candidate row per sample required");
  return [&clf, &dn, x0, eps, candidates, &s, cfg](Tape&, const ParamVars& vars) {
    const Index n = x0.rows(), b = candidates.cols();
    const double ab = s.abar(cfg.t);
    const Mat x_t = diffusion::noisy_sample(x0, cfg.t, eps, s);
    const Var probs = csm::candidate_probs(task::classify(clf, vars, x0), candidates);

    std::vector<int> cond(static_cast<std::size_t>(n * b));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < b; ++j) cond[i * b + j] = candidates(i, j);
    const Mat x_rep = repeat_rows(x_t, b);
    const Var preds = diffusion::denoise(dn, vars, x_rep, std::vector<int>(cond.size(), cfg.t), cond);

    const PredictionKind pk = dn.config.kind;
    if (cfg.mode == Mode::dusa) return loss_variant(cfg.kind, pk, x0, eps, x_t, ab, probs, preds);

    const Mat target = diffusion::prediction_target(cfg.kind, x0, eps, ab);
    const Var uncond = diffusion::denoise(dn, vars, x_t, std::vector<int>(n, cfg.t),
                                          std::vector<int>(n, dn.null_label()));
    return loss_dusa_u(target, probs, convert_rows(pk, cfg.kind, preds, x_rep, ab),
                       convert_rows(pk, cfg.kind, uncond, x_t, ab));
  };
}

AdaptStepReport adapt_step(const Mat& batch, task::Classifier& clf, diffusion::Denoiser& dn,
                           const diffusion::NoiseSchedule& s, const AdaptConfig& cfg, Adam& opt, Rng& rng) {
  check_timestep(cfg.t, s);
  const int classes = clf.config.classes;
  if (dn.config.classes != classes || dn.config.dim != clf.config.dim)
    throw ShapeError("adapt_step: classifier and denoiser dimensions differ");
  const csm::BudgetConfig budget = csm::effective(cfg.budget, classes);
  const Index n = batch.rows();

  AdaptStepReport report;
  const Mat logits = task::classify(clf, batch);
  report.predictions = task::predict_rows(logits);
  if (n == 0) return report;

  const IndexMat candidates = csm::select_rows(logits, budget, rng);
  const Mat eps = rng.normal(n, batch.cols());
  report.candidates = candidates;
  report.candidate_probs.resize(n, candidates.cols());
  for (Index i = 0; i < n; ++i) {
    std::vector<int> idx(static_cast<std::size_t>(candidates.cols()));
    for (Index j = 0; j < candidates.cols(); ++j) idx[j] = candidates(i, j);
    report.candidate_probs.row(i) = csm::probs_over(csm::logit_norm(logits.row(i)), idx).transpose();
  }

  ParamSet joint = joint_params(clf, dn);
  ParamSet grads;
  const Index chunks = std::clamp<Index>(cfg.accumulate, 1, n);
  const Index per = (n + chunks - 1) / chunks;
  double loss = 0.0;
  for (Index start = 0; start < n; start += per) {
    const Index m = std::min(per, n - start);
    const auto vg = value_and_grad(dusa_objective(clf, dn, rows_of(batch, start, m), rows_of(eps, start, m),
                                                  rows_of(candidates, start, m), s, cfg),
                                   joint);
    const double w = static_cast<double>(m) / static_cast<double>(n);
    accumulate_into(grads, vg.grads, w);
    loss += w * vg.value;
  }
  opt.step(joint, grads);
  scatter_params(joint, clf, dn);

  const long b = budget.budget();
  report.loss = loss;
  report.denoiser_forwards = n * (cfg.mode == Mode::dusa ? b : b + 1);
  report.denoiser_backwards = n * (cfg.mode == Mode::dusa ? b : 1);
  return report;
}

// -- segmentation ------------------------------------------------------------

std::vector<int> seg_candidates(const Mat& pixel_logits, int budget, Rng& rng) {
  const int classes = static_cast<int>(pixel_logits.cols());
  if (budget < 1) throw std::invalid_argument("seg_candidates: budget must be at least 1");
  const int target = std::min(budget, classes);
  std::vector<char> seen(classes, 0);
  for (Index p = 0; p < pixel_logits.rows(); ++p) seen[task::predict(pixel_logits.row(p))] = 1;
  std::vector<int> predicted, remaining;
  for (int k = 0; k < classes; ++k) (seen[k] ? predicted : remaining).push_back(k);

  std::vector<int> out;
  if (static_cast<int>(predicted.size()) > target) {
    const std::vector<int> perm = rng.permutation(static_cast<int>(predicted.size()));
    for (int i = 0; i < target; ++i) out.push_back(predicted[perm[i]]);
  } else {
    out = predicted;
    const std::vector<int> perm = rng.permutation(static_cast<int>(remaining.size()));
    for (std::size_t i = 0; static_cast<int>(out.size()) < target; ++i) out.push_back(remaining[perm[i]]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

LossFn dusa_seg_objective(const task::DenseLabeler& dl, const diffusion::Denoiser& dn, const Mat& images,
                          const Mat& eps, const std::vector<std::vector<int>>& candidates,
                          const diffusion::NoiseSchedule& s, const SegAdaptConfig& cfg) {
  check_timestep(cfg.t, s);
  if (static_cast<Index>(candidates.size()) != images.rows())
    throw ShapeError("dusa_seg_objective: one candidate set per image required");
  const Index b = candidates.empty() ? 0 : static_cast<Index>(candidates.front().size());
  for (const auto& c : candidates)
    if (static_cast<Index>(c.size()) != b) throw ShapeError("dusa_seg_objective: candidate sets differ in size");
  return [&dl, &dn, images, eps, candidates, &s, cfg, b](Tape&, const ParamVars& vars) {
    const Index n = images.rows();
    const int pixels = dl.config.pixels();
    const Mat x_t = diffusion::noisy_sample(images, cfg.t, eps, s);

    IndexMat idx(n * pixels, b);
    std::vector<int> cond;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < b; ++j) cond.push_back(candidates[i][j]);
      for (int p = 0; p < pixels; ++p)
        for (Index j = 0; j < b; ++j) idx(i * pixels + p, j) = candidates[i][j];
    }
    const Var probs = csm::candidate_probs(task::dense_classify(dl, vars, images), idx);
    const Var maps = diffusion::denoise(dn, vars, repeat_rows(x_t, b), std::vector<int>(cond.size(), cfg.t), cond);
    if (cfg.mode == Mode::dusa) return loss_dusa_seg(eps, probs, maps, dl.config.channels);

    const Var uncond = diffusion::denoise(dn, vars, x_t, std::vector<int>(n, cfg.t),
                                          std::vector<int>(n, dn.null_label()));
    const double scale = 1.0 / static_cast<double>(n * pixels);
    return loss_dusa_seg(eps, probs, stop_gradient(maps), dl.config.channels) + scale * sum(square(eps - uncond));
  };
}

AdaptStepReport adapt_step_seg(const Mat& images, task::DenseLabeler& dl, diffusion::Denoiser& dn,
                               const diffusion::NoiseSchedule& s, const SegAdaptConfig& cfg, Adam& opt, Rng& rng) {
  check_timestep(cfg.t, s);
  if (cfg.budget < 1) throw std::invalid_argument("adapt_step_seg: budget must be at least 1");
  if (dn.config.dim != dl.config.pixels() * dl.config.channels || dn.config.classes != dl.config.classes)
    throw ShapeError("adapt_step_seg: labeler and grid denoiser dimensions differ");
  const Index n = images.rows();
  const int pixels = dl.config.pixels();

  AdaptStepReport report;
  const Mat logits = task::dense_classify(dl, images);
  report.predictions = task::predict_rows(logits);
  if (n == 0) return report;

  std::vector<std::vector<int>> candidates;
  for (Index i = 0; i < n; ++i) candidates.push_back(seg_candidates(logits.middleRows(i * pixels, pixels), cfg.budget, rng));
  const Mat eps = rng.normal(n, images.cols());

  ParamSet joint = joint_params(dl, dn);
  const auto vg = value_and_grad(dusa_seg_objective(dl, dn, images, eps, candidates, s, cfg), joint);
  opt.step(joint, vg.grads);
  scatter_params(joint, dl, dn);

  const long b = static_cast<long>(candidates.front().size());
  report.loss = vg.value;
  report.denoiser_forwards = n * (cfg.mode == Mode::dusa ? b : b + 1);
  report.denoiser_backwards = n * (cfg.mode == Mode::dusa ? b : 1);
  return report;
}

}  // namespace dusa
