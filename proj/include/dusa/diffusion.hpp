#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dusa/autodiff.hpp"
#include "dusa/mlp.hpp"
#include "dusa/optim.hpp"
#include "dusa/rng.hpp"

namespace dusa::diffusion {

/// beta_t and abar_t = prod_{i <= t} (1 - beta_i) for t = 1..T. abar_0 = 1 is
/// the identity boundary and is not a valid adaptation timestep.
struct NoiseSchedule {
  int steps = 0;
  Vec beta;       // beta(t - 1) is beta_t
  Vec alpha_bar;  // alpha_bar(t - 1) is abar_t

  double abar(int t) const;
  std::uint64_t fingerprint() const;
};

NoiseSchedule linear_schedule(int steps = 1000, double beta_first = 1e-4, double beta_last = 0.02);

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, row-wise. t = 0 returns x0.
Mat noisy_sample(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& s);

enum class PredictionKind { epsilon, x0, v };

std::string to_string(PredictionKind kind);
PredictionKind parse_prediction_kind(const std::string& name);

/// Affine map taking a `from`-parameterised prediction to the `to`
/// parameterisation: value -> a * value + c * x_t.
struct Conversion {
  double a = 1.0;
  double c = 0.0;
};
Conversion conversion(PredictionKind from, PredictionKind to, double alpha_bar);

Mat convert_prediction(PredictionKind from, PredictionKind to, const Mat& value, const Mat& x_t, double alpha_bar);
Var convert_prediction(PredictionKind from, PredictionKind to, const Var& value, const Mat& x_t, double alpha_bar);

/// Regression target for a denoiser of `kind` trained on (x0, eps, x_t).
Mat prediction_target(PredictionKind kind, const Mat& x0, const Mat& eps, double alpha_bar);

struct DenoiserConfig {
  int dim = 8;
  int classes = 8;
  int time_dim = 32;
  int class_dim = 16;
  std::vector<int> hidden{128, 128};
  PredictionKind kind = PredictionKind::epsilon;
};

/// Conditional noise predictor. Class embeddings are rows 0..K-1 of the table
/// "dn.embed"; row K is the null condition.
struct Denoiser {
  DenoiserConfig config;
  ParamSet params;

  int null_label() const { return config.classes; }
  MlpShape trunk_shape() const;
};

inline const std::string kDenoiserPrefix = "dn.";
inline const std::string kEmbedName = "dn.embed";
inline const std::string kTrunkPrefix = "dn.trunk.";

/// Fresh denoiser: N(0, 1) class embeddings, Glorot trunk, zero output layer.
Denoiser make_denoiser(const DenoiserConfig& cfg, Rng& rng, bool zero_last = true);

/// Sinusoidal embedding: [sin(t f_i), cos(t f_i)] with f_i = 10000^(-i / half).
Mat time_embedding(const std::vector<int>& t, int dim);

/// Tape forward with hard conditions. cond values lie in [0, K]; K is null.
Var denoise(const Denoiser& dn, const ParamVars& vars, const Mat& x_t, const std::vector<int>& t,
            const std::vector<int>& cond);

/// Tape forward with a soft condition: probs (N x K) times the class rows.
Var denoise_soft(const Denoiser& dn, const ParamVars& vars, const Mat& x_t, const std::vector<int>& t,
                 const Var& probs);

/// Plain evaluation at one timestep and one condition for every row.
Mat denoise(const Denoiser& dn, const Mat& x_t, int t, int cond);

/// -eps_hat / sqrt(1 - abar_t). The denoiser output is converted to an
/// epsilon prediction first.
Mat score_estimate(const Denoiser& dn, const Mat& x_t, int t, int cond, const NoiseSchedule& s);

struct TrainConfig {
  int epochs = 100;
  int batch = 64;
  double lr = 1e-3;
  double p_null = 0.1;
};

/// Minimises E||target - f(x_t, t, c)||^2 with t uniform on 1..T, standard
/// normal eps and the condition replaced by null with probability p_null.
/// Appends the mean loss of every epoch to `loss_trace` when given.
Denoiser train_denoiser(const Mat& x0, const std::vector<int>& labels, const NoiseSchedule& s,
                        const DenoiserConfig& cfg, const TrainConfig& train, Rng& rng,
                        std::vector<double>* loss_trace = nullptr);

/// Continues training an existing denoiser.
void fit_denoiser(Denoiser& dn, const Mat& x0, const std::vector<int>& labels, const NoiseSchedule& s,
                  const TrainConfig& train, Rng& rng, std::vector<double>* loss_trace = nullptr);

}  // namespace dusa::diffusion
