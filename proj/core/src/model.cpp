#include "fcal/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fcal/errors.hpp"

namespace fcal {

namespace {

constexpr int kCheckpointVersion = 1;

double gen_sigmoid_value(double x, const SigmaHead& head) {
  double t = head.eta * x;
  double s = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t))
                      : std::exp(t) / (1.0 + std::exp(t));
  return head.alpha + (head.beta - head.alpha) * s;
}

std::size_t param_count_for(const std::vector<int>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    n += static_cast<std::size_t>(sizes[l]) *
             static_cast<std::size_t>(sizes[l + 1]) +
         static_cast<std::size_t>(sizes[l + 1]);
  }
  return n;
}

}  // namespace

void MlpConfig::validate() const {
  if (layer_sizes.size() < 2) {
    throw ConfigError("model: need at least an input and an output layer");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw ConfigError("model: layer sizes must be positive");
  }
  if (layer_sizes.back() % 2 != 0) {
    throw ConfigError(
        "model: output layer width must be even (mean and scale channel per "
        "target component), got " +
        std::to_string(layer_sizes.back()));
  }
  if (head.alpha < 0.0) {
    throw ConfigError("model: sigma head alpha must be nonnegative");
  }
  if (!(head.beta > head.alpha)) {
    throw ConfigError("model: sigma head needs beta > alpha");
  }
  if (!(head.eta > 0.0) || !(head.floor > 0.0)) {
    throw ConfigError("model: sigma head eta and floor must be positive");
  }
}

MlpRegressor::MlpRegressor(MlpConfig config) : config_(std::move(config)) {
  config_.validate();
  params_.assign(param_count_for(config_.layer_sizes), 0.0);
}

MlpRegressor MlpRegressor::initialized(MlpConfig config, Rng& rng) {
  MlpRegressor model(std::move(config));
  const auto& sizes = model.config_.layer_sizes;
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    auto fan_in = static_cast<double>(sizes[l]);
    double limit = std::sqrt(6.0 / fan_in);
    std::size_t weights = static_cast<std::size_t>(sizes[l]) *
                          static_cast<std::size_t>(sizes[l + 1]);
    for (std::size_t i = 0; i < weights; ++i) {
      model.params_[pos++] = rng.uniform(-limit, limit);
    }
    pos += static_cast<std::size_t>(sizes[l + 1]);  // biases stay zero
  }
  return model;
}

MlpRegressor::Prediction MlpRegressor::predict(std::span<const double> x_flat,
                                               std::size_t count) const {
  const auto& sizes = config_.layer_sizes;
  const auto in_dim = static_cast<std::size_t>(config_.in_dim());
  const auto out_dim = static_cast<std::size_t>(config_.out_dim());
  if (x_flat.size() != in_dim * count) {
    throw std::invalid_argument("predict: feature buffer has wrong size");
  }
  Prediction out;
  out.mu.resize(count * out_dim);
  out.sigma.resize(count * out_dim);

  const double sigma_min = config_.head.alpha + config_.head.floor;
  std::vector<double> h, next;
  for (std::size_t s = 0; s < count; ++s) {
    h.assign(x_flat.begin() + static_cast<std::ptrdiff_t>(s * in_dim),
             x_flat.begin() + static_cast<std::ptrdiff_t>((s + 1) * in_dim));
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto rows = static_cast<std::size_t>(sizes[l + 1]);
      const auto cols = static_cast<std::size_t>(sizes[l]);
      const bool last = l + 2 == sizes.size();
      next.assign(rows, 0.0);
      const double* w = params_.data() + pos;
      const double* b = params_.data() + pos + rows * cols;
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* wr = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc = acc + wr[c] * h[c];
        next[r] = last ? acc : (acc > 0.0 ? acc : 0.0);
      }
      h.swap(next);
      pos += rows * cols + rows;
    }
    for (std::size_t d = 0; d < out_dim; ++d) {
      out.mu[s * out_dim + d] = h[d];
      double g = gen_sigmoid_value(h[out_dim + d], config_.head);
      // Mirrors the taped sigma_min + relu(g - sigma_min) so both paths
      // round identically.
      double excess = g - sigma_min;
      out.sigma[s * out_dim + d] = sigma_min + (excess > 0.0 ? excess : 0.0);
    }
  }
  return out;
}

MlpRegressor::TapedPrediction MlpRegressor::forward(
    Tape& tape, std::span<const Var> params, std::span<const double> x_flat,
    std::size_t count) const {
  const auto& sizes = config_.layer_sizes;
  const auto in_dim = static_cast<std::size_t>(config_.in_dim());
  const auto out_dim = static_cast<std::size_t>(config_.out_dim());
  if (params.size() != params_.size()) {
    throw std::invalid_argument("forward: parameter Var count mismatch");
  }
  if (x_flat.size() != in_dim * count) {
    throw std::invalid_argument("forward: feature buffer has wrong size");
  }
  TapedPrediction out;
  out.mu.reserve(count * out_dim);
  out.sigma.reserve(count * out_dim);

  const double sigma_min = config_.head.alpha + config_.head.floor;
  std::vector<Var> h, next;
  for (std::size_t s = 0; s < count; ++s) {
    h.clear();
    for (std::size_t c = 0; c < in_dim; ++c) {
      h.push_back(tape.constant(x_flat[s * in_dim + c]));
    }
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto rows = static_cast<std::size_t>(sizes[l + 1]);
      const auto cols = static_cast<std::size_t>(sizes[l]);
      const bool last = l + 2 == sizes.size();
      next.clear();
      for (std::size_t r = 0; r < rows; ++r) {
        Var acc = params[pos + rows * cols + r];  // bias
        for (std::size_t c = 0; c < cols; ++c) {
          acc = acc + params[pos + r * cols + c] * h[c];
        }
        next.push_back(last ? acc : relu(acc));
      }
      h.swap(next);
      pos += rows * cols + rows;
    }
    for (std::size_t d = 0; d < out_dim; ++d) {
      out.mu.push_back(h[d]);
      Var g = gen_sigmoid(h[out_dim + d], config_.head.alpha, config_.head.beta,
                          config_.head.eta);
      out.sigma.push_back(sigma_min + relu(g - sigma_min));
    }
  }
  return out;
}

std::string MlpRegressor::to_json() const {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["kind"] = "mlp_regressor";
  j["layer_sizes"] = config_.layer_sizes;
  j["sigma_head"] = {{"alpha", config_.head.alpha},
                     {"beta", config_.head.beta},
                     {"eta", config_.head.eta},
                     {"floor", config_.head.floor}};
  j["parameters"] = params_;
  return j.dump(2) + "\n";
}

MlpRegressor MlpRegressor::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kCheckpointVersion) {
      throw IoError("checkpoint: unsupported format_version " +
                    j.at("format_version").dump());
    }
    if (j.at("kind").get<std::string>() != "mlp_regressor") {
      throw IoError("checkpoint: unexpected kind " + j.at("kind").dump());
    }
    MlpConfig config;
    config.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    const auto& head = j.at("sigma_head");
    config.head.alpha = head.at("alpha").get<double>();
    config.head.beta = head.at("beta").get<double>();
    config.head.eta = head.at("eta").get<double>();
    config.head.floor = head.at("floor").get<double>();
    MlpRegressor model(std::move(config));
    auto params = j.at("parameters").get<std::vector<double>>();
    if (params.size() != model.params_.size()) {
      throw IoError("checkpoint: parameter count " +
                    std::to_string(params.size()) + " does not match layers (" +
                    std::to_string(model.params_.size()) + " expected)");
    }
    model.params_ = std::move(params);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: missing or mistyped field: ") +
                  e.what());
  }
}

void MlpRegressor::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_json();
  if (!out) throw IoError("failed writing checkpoint to " + path.string());
}

MlpRegressor MlpRegressor::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

double train_step(MlpRegressor& model, const Batch& batch,
                  const LossSpec& loss, const SgdConfig& opt, SgdState& state,
                  Rng& rng) {
  loss.validate();
  if (batch.count == 0) throw std::invalid_argument("train_step: empty batch");
  const auto out_dim = static_cast<std::size_t>(model.config().out_dim());
  const std::size_t residuals = batch.count * out_dim;
  const bool wants_fcal = loss.calibration == CalibrationKind::FcalKl ||
                          loss.calibration == CalibrationKind::FcalWass;
  if (wants_fcal && residuals < static_cast<std::size_t>(loss.dof)) {
    throw ConfigError("train_step: batch provides " +
                      std::to_string(residuals) +
                      " residuals but the fcal term aggregates " +
                      std::to_string(loss.dof) +
                      " per hyper-constraint; enlarge the batch or lower dof");
  }

  // Recording a full batch costs tens of megabytes of nodes; reusing one
  // tape per thread keeps that memory warm instead of refaulting it every
  // step (clear() drops the nodes but keeps the capacity).
  static thread_local Tape tape;
  tape.clear();
  std::vector<Var> param_vars = tape.inputs(model.parameters());
  auto pred = model.forward(tape, param_vars, batch.x, batch.count);

  HyperConstraintAssignment assignment;
  const HyperConstraintAssignment* assignment_ptr = nullptr;
  if (wants_fcal) {
    assignment = draw_hyperconstraint_assignment(residuals, loss.dof,
                                                 loss.constraints, rng);
    assignment_ptr = &assignment;
  }
  Var objective =
      training_objective(pred.mu, pred.sigma, batch.y, loss, assignment_ptr);
  double value = objective.value();
  if (!std::isfinite(value)) {
    throw TrainingError("train_step: loss became non-finite (" +
                        std::to_string(value) + ") on a batch of " +
                        std::to_string(batch.count) + " samples");
  }

  Gradients grads = tape.backward(objective);
  if (state.velocity.empty()) {
    state.velocity.assign(model.parameter_count(), 0.0);
  } else if (state.velocity.size() != model.parameter_count()) {
    throw std::invalid_argument(
        "train_step: optimizer state sized for a different model");
  }
  auto params = model.mutable_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads.wrt(param_vars[i]);
    if (!std::isfinite(g)) {
      throw TrainingError("train_step: non-finite gradient at parameter " +
                          std::to_string(i));
    }
    state.velocity[i] =
        opt.momentum * state.velocity[i] - opt.learning_rate * g;
    params[i] += state.velocity[i];
  }
  return value;
}

}  // namespace fcal
