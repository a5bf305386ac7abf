#pragma once

#include <string>
#include <vector>

#include "dusa/autodiff.hpp"
#include "dusa/rng.hpp"

namespace dusa {

/// Fully connected stack with SiLU between layers. `sizes` lists the input
/// width, every hidden width and the output width.
struct MlpShape {
  std::vector<int> sizes;

  int input() const { return sizes.front(); }
  int output() const { return sizes.back(); }
  int layers() const { return static_cast<int>(sizes.size()) - 1; }
};

std::string weight_name(const std::string& prefix, int layer);
std::string bias_name(const std::string& prefix, int layer);

/// Glorot-uniform weights, zero biases. The final layer starts at zero unless
/// `zero_last` is false.
ParamSet init_mlp(const std::string& prefix, const MlpShape& shape, Rng& rng, bool zero_last = true);

Var mlp_forward(const ParamVars& params, const std::string& prefix, const MlpShape& shape, const Var& x);

/// Inference without building a tape.
Mat mlp_eval(const ParamSet& params, const std::string& prefix, const MlpShape& shape, const Mat& x);

}  // namespace dusa
