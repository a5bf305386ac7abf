#pragma once

#include <vector>

#include "dusa/autodiff.hpp"
#include "dusa/rng.hpp"

namespace dusa::csm {

/// How the m extra classes are drawn from the non-top-k remainder.
enum class ExtraLaw {
  softmax,  // proportional to exp(z / temperature) of the raw logits
  uniform,
};

struct BudgetConfig {
  int k = 4;
  int m = 2;
  ExtraLaw law = ExtraLaw::softmax;
  double temperature = 1.0;

  int budget() const { return k + m; }
};

/// Clips k and m so that k + m <= classes, warning once on stderr when it
/// does. Throws if the budget is empty.
BudgetConfig effective(const BudgetConfig& cfg, int classes);

struct CandidateSet {
  std::vector<int> indices;  // first k entries are the top-k
  Vec probs;                 // aligned with indices
};

inline constexpr double kNormGuard = 1e-12;

/// z / max(||z||, 1e-12).
RowVec logit_norm(const Eigen::Ref<const RowVec>& z);
Var logit_norm(const Var& logits);

/// Indices of the k largest raw logits (ties toward the lower index) followed
/// by m draws without replacement from the remaining classes. When m covers
/// the whole remainder it is appended in index order and `rng` is untouched.
std::vector<int> select(const Eigen::Ref<const RowVec>& z_raw, const BudgetConfig& cfg, Rng& rng);

/// Softmax of z_norm restricted to `indices`.
Vec probs_over(const Eigen::Ref<const RowVec>& z_norm, const std::vector<int>& indices);

CandidateSet select_candidates(const Eigen::Ref<const RowVec>& z, const BudgetConfig& cfg, Rng& rng);

/// Row-wise selection for a batch of raw logits; N x b index matrix.
IndexMat select_rows(const Mat& logits, const BudgetConfig& cfg, Rng& rng);

/// Differentiable candidate probabilities: softmax over the selected entries
/// of the row-normalised logits. N x b.
Var candidate_probs(const Var& logits, const IndexMat& indices);

}  // namespace dusa::csm
