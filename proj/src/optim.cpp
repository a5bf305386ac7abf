#include "dusa/optim.hpp"

#include <cmath>

namespace dusa {

namespace {

void update_one(Mat& p, const Mat& g, Mat& m, Mat& v, double lr, const AdamConfig& cfg, std::int64_t step) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
}

void check_shapes(const ParamSet& params, const ParamSet& grads) {
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) throw ShapeError("adam: gradient for unknown parameter " + name);
    if (it->second.rows() != g.rows() || it->second.cols() != g.cols())
      throw ShapeError("adam: gradient shape mismatch for " + name);
  }
}

Mat& moment(ParamSet& store, const std::string& name, const Mat& like) {
  auto it = store.find(name);
  if (it == store.end()) it = store.emplace(name, Mat::Zero(like.rows(), like.cols())).first;
  if (it->second.rows() != like.rows() || it->second.cols() != like.cols())
    throw ShapeError("adam: optimizer state shape mismatch for " + name);
  return it->second;
}

}  // namespace

void adam_update(ParamSet& params, const ParamSet& grads, OptState& state, const AdamConfig& cfg) {
  check_shapes(params, grads);
  ++state.step;
  for (const auto& [name, g] : grads) {
    Mat& p = params.at(name);
    update_one(p, g, moment(state.m, name, p), moment(state.v, name, p), cfg.lr, cfg, state.step);
  }
}

std::pair<ParamSet, OptState> adam_step(const ParamSet& params, const ParamSet& grads, const OptState& state,
                                        const AdamConfig& cfg) {
  ParamSet p = params;
  OptState s = state;
  adam_update(p, grads, s, cfg);
  return {std::move(p), std::move(s)};
}

void Adam::step(ParamSet& params, const ParamSet& grads) {
  check_shapes(params, grads);
  ++state_.step;
  for (const auto& [name, g] : grads) {
    double lr = cfg_.lr;
    std::size_t best = 0;
    for (const auto& [prefix, rate] : prefix_lr_) {
      if (name.compare(0, prefix.size(), prefix) == 0 && prefix.size() >= best) {
        best = prefix.size();
        lr = rate;
      }
    }
    Mat& p = params.at(name);
    update_one(p, g, moment(state_.m, name, p), moment(state_.v, name, p), lr, cfg_, state_.step);
  }
}

}  // namespace dusa
