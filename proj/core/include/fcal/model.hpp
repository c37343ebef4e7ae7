#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fcal/autodiff.hpp"
#include "fcal/losses.hpp"
#include "fcal/rng.hpp"

namespace fcal {

/// Generalized-sigmoid head that maps a raw network output to a predictive
/// scale: g(x) = alpha + (beta - alpha) / (1 + exp(-eta * x)), then floored
/// at alpha + floor so downstream divisions and logs stay well defined.
struct SigmaHead {
  double alpha = 0.0;
  double beta = 50.0;
  double eta = 0.15;
  double floor = 1e-3;
};

struct MlpConfig {
  /// Layer widths from input to output. The last entry must be twice the
  /// target dimension: one mean and one scale channel per target component.
  std::vector<int> layer_sizes;
  SigmaHead head;

  int in_dim() const { return layer_sizes.front(); }
  int out_dim() const { return layer_sizes.back() / 2; }

  void validate() const;  // throws ConfigError
};

/// Flat sample batch. `x` holds count * in_dim features, `y` holds
/// count * out_dim targets, both row-major.
struct Batch {
  std::span<const double> x;
  std::span<const double> y;
  std::size_t count = 0;
};

struct SgdConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
};

/// Momentum buffer; sized lazily on first step.
struct SgdState {
  std::vector<double> velocity;
};

/// Fully connected ReLU network with a mean head and a sigmoid-bounded
/// scale head. Parameters live in one flat vector (per layer: row-major
/// weights, then biases) so the optimizer and the tape can treat the model
/// as a plain parameter array.
class MlpRegressor {
public:
  explicit MlpRegressor(MlpConfig config);

  /// Fresh model with weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)) and
  /// zero biases.
  static MlpRegressor initialized(MlpConfig config, Rng& rng);

  const MlpConfig& config() const { return config_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  std::span<double> mutable_parameters() { return params_; }

  struct Prediction {
    std::vector<double> mu;     // count * out_dim
    std::vector<double> sigma;  // count * out_dim, always >= alpha + floor
  };

  /// Plain-double forward pass. Produces bit-identical values to the taped
  /// forward below; both paths share the same accumulation order and the
  /// build disables fp contraction to keep that guarantee meaningful.
  Prediction predict(std::span<const double> x_flat, std::size_t count) const;

  struct TapedPrediction {
    std::vector<Var> mu;
    std::vector<Var> sigma;
  };

  /// Differentiable forward pass: `params` must be the model's parameters
  /// registered on `tape` (one Var per entry, in order).
  TapedPrediction forward(Tape& tape, std::span<const Var> params,
                          std::span<const double> x_flat,
                          std::size_t count) const;

  std::string to_json() const;
  static MlpRegressor from_json(const std::string& text);

  void save(const std::filesystem::path& path) const;
  static MlpRegressor load(const std::filesystem::path& path);

private:
  MlpConfig config_;
  std::vector<double> params_;
};

/// One SGD-with-momentum update on `batch` under `loss`.
///
/// Draws a fresh hyper-constraint assignment from `rng` when the loss has an
/// fcal term (the batch must then supply at least `loss.dof` residuals,
/// counting every target component). Returns the combined loss at the
/// pre-update parameters. Throws TrainingError if the loss or any gradient
/// goes non-finite.
double train_step(MlpRegressor& model, const Batch& batch,
                  const LossSpec& loss, const SgdConfig& opt, SgdState& state,
                  Rng& rng);

}  // namespace fcal
