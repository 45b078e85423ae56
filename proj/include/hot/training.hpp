#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hot/ad_model.hpp"
#include "hot/autodiff.hpp"
#include "hot/layer.hpp"

namespace hot {

// ---- gradient checking ----

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t samples = 64;  // coordinates per parameter (all if fewer)
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  std::uint64_t seed = 0;
  ad::Fault fault = ad::Fault::kNone;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coords = 0;
  std::string worst;  // "param[index]"
};

/// Compares `analytic` against central differences of f on sampled
/// coordinates. f reads the current values of `params`, which are perturbed
/// in place and restored.
GradCheckResult finite_diff_check(const std::function<double()>& f, const std::vector<DenseTensor*>& params,
                                  const std::vector<std::string>& names, const std::vector<DenseTensor>& analytic,
                                  const GradCheckOptions& opt = {});

/// Records a scalar loss from parameter leaves (given in `params` order).
using LossBuilder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Backward on a fresh tape, then finite_diff_check of the same builder.
GradCheckResult gradient_check(const LossBuilder& build, std::vector<DenseTensor> params,
                               const std::vector<std::string>& names, const GradCheckOptions& opt = {});

/// Shape of the attention/block gradient suites: random input of
/// (dims..., model_dim), Glorot weights, loss = <output, fixed Gaussian R>.
struct GradSuiteShape {
  std::vector<std::size_t> dims{3, 4};
  std::size_t model_dim = 8;
  std::size_t heads = 2;
  std::size_t features = 16;
  std::size_t ffn_dim = 16;
};

/// Gradients w.r.t. the input and every head projection; opt.seed seeds
/// the data, weights, feature map and sampled coordinates.
GradCheckResult attention_gradcheck(AttentionVariant v, const GradSuiteShape& shape, const GradCheckOptions& opt);
/// Gradients w.r.t. the input and every block parameter (post-norm block,
/// norm parameters perturbed away from the identity).
GradCheckResult block_gradcheck(AttentionVariant v, const GradSuiteShape& shape, const GradCheckOptions& opt);
/// 0.5 |x|^2 on a random vector of length n; the checker's own floor.
GradCheckResult quadratic_gradcheck(std::size_t n, const GradCheckOptions& opt);

// ---- optimiser ----

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Adam {
 public:
  Adam(const AdamOptions& opt, const std::vector<Shape>& shapes);

  /// Bias-corrected update. Throws NonFiniteGradient (parameters untouched)
  /// if any gradient entry is NaN or infinite.
  void step(const std::vector<DenseTensor*>& params, const std::vector<DenseTensor>& grads,
            const std::vector<std::string>& names = {});
  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

 private:
  AdamOptions opt_;
  std::vector<DenseTensor> m_, v_;
  std::size_t t_ = 0;
};

// ---- metrics ----

inline constexpr double kSmapeEps = 1e-8;

double mse(const DenseTensor& pred, const DenseTensor& target);
double mae(const DenseTensor& pred, const DenseTensor& target);
/// mean of 2|p - t| / (|p| + |t| + 1e-8).
double smape(const DenseTensor& pred, const DenseTensor& target);
/// Mean cross-entropy of B x C logits.
double cross_entropy(const DenseTensor& logits, const std::vector<std::size_t>& labels);
double accuracy(const DenseTensor& logits, const std::vector<std::size_t>& labels);
/// Binary AUC via the rank statistic, ties sharing the average rank.
double auc(const std::vector<double>& scores, const std::vector<bool>& positive);
/// Mean one-vs-rest AUC over classes present in `labels` (B x C scores).
double auc_ovr(const DenseTensor& scores, const std::vector<std::size_t>& labels);

// ---- synthetic tasks ----

/// x[n,t] = a_n + b_t + sigma e[n,t], with a_n ~ N(0,1) per variate,
/// b_t = A sin(2 pi t / P + phi) shared by all variates, e ~ N(0,1).
/// y[s,n] = rho^(s+1) x[n,T-1] + gamma x[n,T-1] mean_{n',t}(x) + noise.
/// The cross term needs every variate and every time step of the window.
struct ForecastTaskSpec {
  std::size_t variates = 4;
  std::size_t lookback = 16;
  std::size_t horizon = 4;
  std::size_t train = 256;
  std::size_t val = 64;
  double sigma = 0.3;
  double rho = 0.9;
  double gamma = 1.0;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

struct ForecastData {
  DenseTensor train_x, train_y;  // (B, N, T, 1) and (B, S, N)
  DenseTensor val_x, val_y;
};

ForecastData make_forecast_task(const ForecastTaskSpec& spec);
/// Noise-free target for one window x (N x T): returns S x N.
DenseTensor forecast_target(const DenseTensor& window, const ForecastTaskSpec& spec);

/// side^3 volumes with one Gaussian blob; the class is the octant of its
/// centre, i.e. the joint sign pattern along all three axes (8 classes).
struct VoxelTaskSpec {
  std::size_t side = 8;
  std::size_t train = 256;
  std::size_t val = 64;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

struct VoxelData {
  DenseTensor train_x, val_x;  // (B, side, side, side, 1)
  std::vector<std::size_t> train_y, val_y;
  std::size_t classes = 8;
};

VoxelData make_voxel_task(const VoxelTaskSpec& spec);

// ---- training loop ----

struct TrainOptions {
  std::size_t steps = 500;
  std::size_t batch = 32;
  AdamOptions adam;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
};

/// Forecast rows fill val_mae/val_smape; classifier rows fill val_acc/val_auc.
struct TrainLogRow {
  std::size_t step = 0;
  double batch_loss = 0.0;
  double train_loss = 0.0;  // full train split: MSE or cross-entropy
  double val_loss = 0.0;
  double val_mae = 0.0;
  double val_smape = 0.0;
  double val_acc = 0.0;
  double val_auc = 0.0;
  double elapsed_ms = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  double initial_train = 0.0;
  double final_train = 0.0;
  /// Logged step with the lowest validation MAE (forecast) or error rate
  /// (classifier), and the one with the lowest validation loss; the two
  /// selection rules are reported side by side.
  std::size_t best_step_by_mae = 0;
  std::size_t best_step_by_loss = 0;
  std::size_t parameters = 0;
  ModelWeights weights;
};

/// Batches are (B, sample dims...) tensors; returns per-sample predictions
/// stacked along a new leading mode using the plain forward pass.
DenseTensor predict(const DenseTensor& inputs, const ModelConfig& cfg, const ModelWeights& w);

TrainResult train_forecast(const ModelConfig& cfg, const ForecastData& data, const TrainOptions& opt);
TrainResult train_classifier(const ModelConfig& cfg, const VoxelData& data, const TrainOptions& opt);

/// Least-squares affine map from a flattened sample to its flattened target.
struct LinearReadout {
  DenseTensor weight;  // (features + 1) x outputs, last row is the bias
  std::vector<std::size_t> target_dims;

  static LinearReadout fit(const DenseTensor& inputs, const DenseTensor& targets);
  /// Predictions with the shape of `targets` used in fit, batch from inputs.
  DenseTensor predict(const DenseTensor& inputs) const;
};

/// The given indices of the leading mode, in order.
DenseTensor take_rows(const DenseTensor& t, const std::vector<std::size_t>& rows);

}  // namespace hot
