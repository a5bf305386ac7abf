#include "dusa/csm.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>

namespace dusa::csm {

BudgetConfig effective(const BudgetConfig& cfg, int classes) {
  if (cfg.k < 0 || cfg.m < 0) throw std::invalid_argument("csm: k and m must be non-negative");
  if (cfg.budget() < 1) throw std::invalid_argument("csm: budget k + m must be at least 1");
  if (cfg.budget() <= classes) return cfg;
  static std::once_flag warned;
  std::call_once(warned, [&] {
    std::cerr << "warning: candidate budget " << cfg.budget() << " exceeds " << classes
              << " classes; clipping to " << classes << "\n";
  });
  BudgetConfig out = cfg;
  out.k = std::min(cfg.k, classes);
  out.m = classes - out.k < cfg.m ? classes - out.k : cfg.m;
  return out;
}

RowVec logit_norm(const Eigen::Ref<const RowVec>& z) { return z / std::max(z.norm(), kNormGuard); }

Var logit_norm(const Var& logits) { return l2_normalize_rows(logits, kNormGuard); }

std::vector<int> select(const Eigen::Ref<const RowVec>& z_raw, const BudgetConfig& cfg, Rng& rng) {
  const int classes = static_cast<int>(z_raw.size());
  const BudgetConfig eff = effective(cfg, classes);
  std::vector<int> order(classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return z_raw(a) > z_raw(b); });

  std::vector<int> chosen(order.begin(), order.begin() + eff.k);
  std::vector<int> rest(order.begin() + eff.k, order.end());
  std::sort(rest.begin(), rest.end());
  if (eff.m == 0) return chosen;
  if (eff.m == static_cast<int>(rest.size())) {
    chosen.insert(chosen.end(), rest.begin(), rest.end());
    return chosen;
  }

  std::vector<double> w(rest.size(), 1.0);
  if (eff.law == ExtraLaw::softmax) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c : rest) mx = std::max(mx, z_raw(c) / eff.temperature);
    for (std::size_t i = 0; i < rest.size(); ++i) w[i] = std::exp(z_raw(rest[i]) / eff.temperature - mx);
  }
  for (int draw = 0; draw < eff.m; ++draw) {
    const int pick = rng.categorical(w);
    chosen.push_back(rest[pick]);
    w[pick] = 0.0;
  }
  return chosen;
}

Vec probs_over(const Eigen::Ref<const RowVec>& z_norm, const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("probs_over: no indices");
  std::vector<int> sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("probs_over: duplicate class index");
  Vec sub(static_cast<Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= z_norm.size()) throw std::out_of_range("probs_over: class index out of range");
    sub(static_cast<Index>(i)) = z_norm(indices[i]);
  }
  const Vec e = (sub.array() - sub.maxCoeff()).exp().matrix();
  return e / e.sum();
}

CandidateSet select_candidates(const Eigen::Ref<const RowVec>& z, const BudgetConfig& cfg, Rng& rng) {
  CandidateSet out;
  const RowVec zn = logit_norm(z);
  out.indices = select(z, cfg, rng);
  out.probs = probs_over(zn, out.indices);
  return out;
}

IndexMat select_rows(const Mat& logits, const BudgetConfig& cfg, Rng& rng) {
  const BudgetConfig eff = effective(cfg, static_cast<int>(logits.cols()));
  IndexMat idx(logits.rows(), eff.budget());
  for (Index i = 0; i < logits.rows(); ++i) {
    const std::vector<int> row = select(logits.row(i), eff, rng);
    for (std::size_t j = 0; j < row.size(); ++j) idx(i, static_cast<Index>(j)) = row[j];
  }
  return idx;
}

Var candidate_probs(const Var& logits, const IndexMat& indices) {
  return softmax_rows(gather_per_row(logit_norm(logits), indices));
}

}  // namespace dusa::csm
