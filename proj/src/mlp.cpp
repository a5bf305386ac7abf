#include "dusa/mlp.hpp"

#include <cmath>

namespace dusa {

std::string weight_name(const std::string& prefix, int layer) { return prefix + "l" + std::to_string(layer) + ".W"; }
std::string bias_name(const std::string& prefix, int layer) { return prefix + "l" + std::to_string(layer) + ".b"; }

ParamSet init_mlp(const std::string& prefix, const MlpShape& shape, Rng& rng, bool zero_last) {
  if (shape.sizes.size() < 2) throw std::invalid_argument("init_mlp: need at least input and output widths");
  ParamSet params;
  for (int l = 0; l < shape.layers(); ++l) {
    const int in = shape.sizes[l], out = shape.sizes[l + 1];
    Mat w = Mat::Zero(in, out);
    if (!(zero_last && l == shape.layers() - 1)) {
      const double bound = std::sqrt(6.0 / (in + out));
      for (Index k = 0; k < w.size(); ++k) w.data()[k] = bound * (2.0 * rng.uniform() - 1.0);
    }
    params.emplace(weight_name(prefix, l), std::move(w));
    params.emplace(bias_name(prefix, l), Mat::Zero(1, out));
  }
  return params;
}

Var mlp_forward(const ParamVars& params, const std::string& prefix, const MlpShape& shape, const Var& x) {
  if (x.cols() != shape.input()) throw ShapeError("mlp_forward: input width " + std::to_string(x.cols()) +
                                                  " != " + std::to_string(shape.input()));
  Var h = x;
  for (int l = 0; l < shape.layers(); ++l) {
    h = add_row(matmul(h, params.at(weight_name(prefix, l))), params.at(bias_name(prefix, l)));
    if (l + 1 < shape.layers()) h = silu(h);
  }
  return h;
}

Mat mlp_eval(const ParamSet& params, const std::string& prefix, const MlpShape& shape, const Mat& x) {
  if (x.cols() != shape.input()) throw ShapeError("mlp_eval: input width " + std::to_string(x.cols()) +
                                                  " != " + std::to_string(shape.input()));
  Mat h = x;
  for (int l = 0; l < shape.layers(); ++l) {
    Mat z = h * params.at(weight_name(prefix, l));
    z.rowwise() += params.at(bias_name(prefix, l)).row(0);
    if (l + 1 < shape.layers()) z.array() = z.array() / (1.0 + (-z.array()).exp());
    h = std::move(z);
  }
  return h;
}

}  // namespace dusa
