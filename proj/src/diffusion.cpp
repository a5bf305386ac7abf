#include "dusa/diffusion.hpp"

#include <cmath>

namespace dusa::diffusion {

// -- schedule ----------------------------------------------------------------

double NoiseSchedule::abar(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > steps) throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                                                  std::to_string(steps) + "]");
  return alpha_bar(t - 1);
}

std::uint64_t NoiseSchedule::fingerprint() const {
  std::uint64_t h = fnv1a64(&steps, sizeof(steps));
  return fnv1a64(beta.data(), sizeof(double) * static_cast<std::size_t>(beta.size()), h);
}

NoiseSchedule linear_schedule(int steps, double beta_first, double beta_last) {
  if (steps < 1) throw std::invalid_argument("linear_schedule: need at least one step");
  if (!(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0))
    throw std::invalid_argument("linear_schedule: need 0 < beta_1 <= beta_T < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    s.beta(i) = beta_first + frac * (beta_last - beta_first);
    prod *= 1.0 - s.beta(i);
    s.alpha_bar(i) = prod;
  }
  return s;
}

Mat noisy_sample(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& s) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw ShapeError("noisy_sample: x0 and eps differ in shape");
  const double ab = s.abar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

// -- prediction kinds --------------------------------------------------------

std::string to_string(PredictionKind kind) {
  switch (kind) {
    case PredictionKind::epsilon: return "epsilon";
    case PredictionKind::x0: return "x0";
    case PredictionKind::v: return "v";
  }
  return "?";
}

PredictionKind parse_prediction_kind(const std::string& name) {
  if (name == "epsilon" || name == "eps") return PredictionKind::epsilon;
  if (name == "x0") return PredictionKind::x0;
  if (name == "v") return PredictionKind::v;
  throw std::invalid_argument("unknown prediction kind '" + name + "'");
}

Conversion conversion(PredictionKind from, PredictionKind to, double alpha_bar) {
  if (!(alpha_bar > 0.0 && alpha_bar < 1.0)) throw std::domain_error("convert_prediction: alpha_bar must lie in (0, 1)");
  const double sa = std::sqrt(alpha_bar), sn = std::sqrt(1.0 - alpha_bar);
  Conversion in;  // from -> epsilon
  switch (from) {
    case PredictionKind::epsilon: in = {1.0, 0.0}; break;
    case PredictionKind::x0: in = {-sa / sn, 1.0 / sn}; break;
    case PredictionKind::v: in = {sa, sn}; break;
  }
  Conversion out;  // epsilon -> to
  switch (to) {
    case PredictionKind::epsilon: out = {1.0, 0.0}; break;
    case PredictionKind::x0: out = {-sn / sa, 1.0 / sa}; break;
    case PredictionKind::v: out = {1.0 / sa, -sn / sa}; break;
  }
  if (from == to) return {1.0, 0.0};
  return {out.a * in.a, out.a * in.c + out.c};
}

Mat convert_prediction(PredictionKind from, PredictionKind to, const Mat& value, const Mat& x_t, double alpha_bar) {
  if (value.rows() != x_t.rows() || value.cols() != x_t.cols()) throw ShapeError("convert_prediction: shape mismatch");
  const Conversion k = conversion(from, to, alpha_bar);
  return k.a * value + k.c * x_t;
}

Var convert_prediction(PredictionKind from, PredictionKind to, const Var& value, const Mat& x_t, double alpha_bar) {
  if (from == to) return value;
  const Conversion k = conversion(from, to, alpha_bar);
  return k.a * value + Mat(k.c * x_t);
}

Mat prediction_target(PredictionKind kind, const Mat& x0, const Mat& eps, double alpha_bar) {
  switch (kind) {
    case PredictionKind::epsilon: return eps;
    case PredictionKind::x0: return x0;
    case PredictionKind::v: return std::sqrt(alpha_bar) * eps - std::sqrt(1.0 - alpha_bar) * x0;
  }
  return eps;
}

// -- denoiser ----------------------------------------------------------------

MlpShape Denoiser::trunk_shape() const {
  MlpShape shape;
  shape.sizes.push_back(config.dim + config.time_dim + config.class_dim);
  for (int h : config.hidden) shape.sizes.push_back(h);
  shape.sizes.push_back(config.dim);
  return shape;
}

Denoiser make_denoiser(const DenoiserConfig& cfg, Rng& rng, bool zero_last) {
  if (cfg.dim < 1 || cfg.classes < 1 || cfg.time_dim < 2 || cfg.time_dim % 2 != 0 || cfg.class_dim < 1)
    throw std::invalid_argument("make_denoiser: invalid dimensions");
  Denoiser dn;
  dn.config = cfg;
  dn.params = init_mlp(kTrunkPrefix, dn.trunk_shape(), rng, zero_last);
  dn.params.emplace(kEmbedName, rng.normal(cfg.classes + 1, cfg.class_dim));
  return dn;
}

Mat time_embedding(const std::vector<int>& t, int dim) {
  const int half = dim / 2;
  Mat out(static_cast<Index>(t.size()), dim);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (int k = 0; k < half; ++k) {
      const double f = std::exp(-std::log(10000.0) * k / half);
      out(static_cast<Index>(i), k) = std::sin(t[i] * f);
      out(static_cast<Index>(i), half + k) = std::cos(t[i] * f);
    }
  return out;
}

namespace {

void check_inputs(const Denoiser& dn, const Mat& x_t, std::size_t t_count) {
  if (x_t.cols() != dn.config.dim)
    throw ShapeError("denoiser expects width " + std::to_string(dn.config.dim) + ", got " + std::to_string(x_t.cols()));
  if (t_count != static_cast<std::size_t>(x_t.rows())) throw ShapeError("denoiser: one timestep per row required");
}

}  // namespace

Var denoise(const Denoiser& dn, const ParamVars& vars, const Mat& x_t, const std::vector<int>& t,
            const std::vector<int>& cond) {
  check_inputs(dn, x_t, t.size());
  if (cond.size() != t.size()) throw ShapeError("denoiser: one condition per row required");
  for (int c : cond)
    if (c < 0 || c > dn.null_label())
      throw std::out_of_range("denoiser: condition " + std::to_string(c) + " outside [0, " +
                              std::to_string(dn.null_label()) + "]");
  Tape& tape = vars.at(kEmbedName).tape();
  const Var input = concat_cols({tape.constant(x_t), tape.constant(time_embedding(t, dn.config.time_dim)),
                                 gather_rows(vars.at(kEmbedName), cond)});
  return mlp_forward(vars, kTrunkPrefix, dn.trunk_shape(), input);
}

Var denoise_soft(const Denoiser& dn, const ParamVars& vars, const Mat& x_t, const std::vector<int>& t,
                 const Var& probs) {
  check_inputs(dn, x_t, t.size());
  if (probs.rows() != x_t.rows() || probs.cols() != dn.config.classes)
    throw ShapeError("denoise_soft: probabilities must be N x K");
  Tape& tape = vars.at(kEmbedName).tape();
  const Var cond = matmul(probs, top_rows(vars.at(kEmbedName), dn.config.classes));
  const Var input =
      concat_cols({tape.constant(x_t), tape.constant(time_embedding(t, dn.config.time_dim)), cond});
  return mlp_forward(vars, kTrunkPrefix, dn.trunk_shape(), input);
}

Mat denoise(const Denoiser& dn, const Mat& x_t, int t, int cond) {
  check_inputs(dn, x_t, static_cast<std::size_t>(x_t.rows()));
  if (cond < 0 || cond > dn.null_label()) throw std::out_of_range("denoiser: condition out of range");
  const Index n = x_t.rows();
  const int td = dn.config.time_dim, cd = dn.config.class_dim;
  Mat input(n, dn.config.dim + td + cd);
  input.leftCols(dn.config.dim) = x_t;
  input.middleCols(dn.config.dim, td) = time_embedding(std::vector<int>(1, t), td).replicate(n, 1);
  input.rightCols(cd) = dn.params.at(kEmbedName).row(cond).replicate(n, 1);
  return mlp_eval(dn.params, kTrunkPrefix, dn.trunk_shape(), input);
}

Mat score_estimate(const Denoiser& dn, const Mat& x_t, int t, int cond, const NoiseSchedule& s) {
  const double ab = s.abar(t);
  if (ab >= 1.0) throw std::domain_error("score_estimate: timestep 0 has no noise");
  Mat eps = convert_prediction(dn.config.kind, PredictionKind::epsilon, denoise(dn, x_t, t, cond), x_t, ab);
  return -eps / std::sqrt(1.0 - ab);
}

// -- training ----------------------------------------------------------------

void fit_denoiser(Denoiser& dn, const Mat& x0, const std::vector<int>& labels, const NoiseSchedule& s,
                  const TrainConfig& train, Rng& rng, std::vector<double>* loss_trace) {
  const Index n = x0.rows();
  if (n == 0) throw std::invalid_argument("train_denoiser: empty data");
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("train_denoiser: one label per sample required");
  if (x0.cols() != dn.config.dim) throw ShapeError("train_denoiser: data width differs from denoiser");
  for (int y : labels)
    if (y < 0 || y >= dn.config.classes) throw std::out_of_range("train_denoiser: label outside [0, K)");
  if (!(train.p_null >= 0.0 && train.p_null < 1.0)) throw std::invalid_argument("train_denoiser: p_null in [0, 1)");

  Adam opt(AdamConfig{train.lr});
  const int batch = std::max(1, train.batch);
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    const std::vector<int> order = rng.permutation(static_cast<int>(n));
    double total = 0.0;
    Index seen = 0;
    for (Index start = 0; start < n; start += batch) {
      const Index m = std::min<Index>(batch, n - start);
      Mat xb(m, x0.cols());
      std::vector<int> t(m), cond(m);
      Mat target(m, x0.cols()), x_t(m, x0.cols());
      for (Index i = 0; i < m; ++i) {
        const int idx = order[start + i];
        xb.row(i) = x0.row(idx);
        t[i] = rng.uniform_int(1, s.steps);
        cond[i] = rng.uniform() < train.p_null ? dn.null_label() : labels[idx];
      }
      const Mat eps = rng.normal(m, x0.cols());
      for (Index i = 0; i < m; ++i) {
        const double ab = s.abar(t[i]);
        x_t.row(i) = std::sqrt(ab) * xb.row(i) + std::sqrt(1.0 - ab) * eps.row(i);
        target.row(i) = prediction_target(dn.config.kind, xb.row(i), eps.row(i), ab);
      }
      const auto vg = value_and_grad(
          [&](Tape&, const ParamVars& vars) {
            return (1.0 / static_cast<double>(m)) * sum(square(target - denoise(dn, vars, x_t, t, cond)));
          },
          dn.params);
      opt.step(dn.params, vg.grads);
      total += vg.value * static_cast<double>(m);
      seen += m;
    }
    if (loss_trace) loss_trace->push_back(total / static_cast<double>(seen));
  }
}

Denoiser train_denoiser(const Mat& x0, const std::vector<int>& labels, const NoiseSchedule& s,
                        const DenoiserConfig& cfg, const TrainConfig& train, Rng& rng,
                        std::vector<double>* loss_trace) {
  if (x0.rows() == 0) throw std::invalid_argument("train_denoiser: empty data");
  Denoiser dn = make_denoiser(cfg, rng);
  fit_denoiser(dn, x0, labels, s, train, rng, loss_trace);
  return dn;
}

}  // namespace dusa::diffusion
