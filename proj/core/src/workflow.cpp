#include "fcal/workflow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcal/calibrate.hpp"
#include "fcal/errors.hpp"
#include "fcal/model.hpp"
#include "fcal/rng.hpp"

namespace fs = std::filesystem;

namespace fcal {

std::string noise_flag(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Homoscedastic: return "homo";
    case NoiseKind::Heteroscedastic: return "hetero";
    case NoiseKind::GammaMismatch: return "gamma";
  }
  throw std::invalid_argument("unknown noise kind");
}

NoiseKind noise_from_flag(const std::string& name) {
  if (name == "homo") return NoiseKind::Homoscedastic;
  if (name == "hetero") return NoiseKind::Heteroscedastic;
  if (name == "gamma") return NoiseKind::GammaMismatch;
  throw ConfigError("--noise must be homo, hetero, or gamma (got '" + name +
                    "')");
}

std::string split_flag(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  throw std::invalid_argument("unknown split");
}

Split split_from_flag(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ConfigError("--split must be train, val, or test (got '" + name +
                    "')");
}

std::string loss_flag(CalibrationKind kind) {
  switch (kind) {
    case CalibrationKind::None: return "nll";
    case CalibrationKind::FcalKl: return "fcal-kl";
    case CalibrationKind::FcalWass: return "fcal-wass";
    case CalibrationKind::PerSampleVariance: return "per-sample";
  }
  throw std::invalid_argument("unknown calibration kind");
}

CalibrationKind loss_from_flag(const std::string& name) {
  if (name == "nll") return CalibrationKind::None;
  if (name == "fcal-kl") return CalibrationKind::FcalKl;
  if (name == "fcal-wass") return CalibrationKind::FcalWass;
  if (name == "per-sample") return CalibrationKind::PerSampleVariance;
  throw ConfigError(
      "--loss must be nll, fcal-kl, fcal-wass, or per-sample (got '" + name +
      "')");
}

std::string emp_risk_flag(EmpiricalRisk kind) {
  switch (kind) {
    case EmpiricalRisk::Nll: return "nll";
    case EmpiricalRisk::SmoothL1: return "smooth-l1";
  }
  throw std::invalid_argument("unknown empirical risk kind");
}

EmpiricalRisk emp_risk_from_flag(const std::string& name) {
  if (name == "nll") return EmpiricalRisk::Nll;
  if (name == "smooth-l1") return EmpiricalRisk::SmoothL1;
  throw ConfigError("--emp-risk must be nll or smooth-l1 (got '" + name +
                    "')");
}

std::string sweep_flag(SweepKind kind) {
  switch (kind) {
    case SweepKind::Lambda: return "lambda";
    case SweepKind::Dof: return "K";
    case SweepKind::Gamma: return "gamma";
  }
  throw std::invalid_argument("unknown sweep kind");
}

SweepKind sweep_from_flag(const std::string& name) {
  if (name == "lambda") return SweepKind::Lambda;
  if (name == "K") return SweepKind::Dof;
  if (name == "gamma") return SweepKind::Gamma;
  throw ConfigError("--over must be lambda, K, or gamma (got '" + name + "')");
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

nlohmann::json parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  return j;
}

/// Handles the keys shared by "command" echoes; returns true if consumed.
bool apply_meta_key(const std::string& key, const nlohmann::json& v,
                    const char* command) {
  if (key == "command") {
    if (v.get<std::string>() != command) {
      throw ConfigError("config was written by '" + v.get<std::string>() +
                        "', not '" + command + "'");
    }
    return true;
  }
  if (key == "format_version") {
    if (v.get<int>() != kRunConfigVersion) {
      throw ConfigError("config format_version " + v.dump() +
                        " is not supported");
    }
    return true;
  }
  return false;
}

bool apply_synth_key(SynthConfig& c, const std::string& key,
                     const nlohmann::json& v) {
  if (key == "noise") {
    c.noise = noise_from_flag(v.get<std::string>());
  } else if (key == "n") {
    c.count = v.get<std::size_t>();
  } else if (key == "distractors") {
    c.distractors = v.get<int>();
  } else if (key == "canvas") {
    c.canvas = v.get<double>();
  } else if (key == "radius_min") {
    c.radius_min = v.get<double>();
  } else if (key == "radius_max") {
    c.radius_max = v.get<double>();
  } else if (key == "sigma") {
    c.sigma = v.get<double>();
  } else if (key == "sigma_min") {
    c.sigma_min = v.get<double>();
  } else if (key == "sigma_range") {
    c.sigma_range = v.get<double>();
  } else if (key == "gamma") {
    c.gamma_shape = v.get<double>();
  } else {
    return false;
  }
  return true;
}

void synth_to_json(nlohmann::json& j, const SynthConfig& c) {
  j["noise"] = noise_flag(c.noise);
  j["n"] = c.count;
  j["distractors"] = c.distractors;
  j["canvas"] = c.canvas;
  j["radius_min"] = c.radius_min;
  j["radius_max"] = c.radius_max;
  j["sigma"] = c.sigma;
  j["sigma_min"] = c.sigma_min;
  j["sigma_range"] = c.sigma_range;
  j["gamma"] = c.gamma_shape;
}

bool apply_train_key(TrainRun& t, const std::string& key,
                     const nlohmann::json& v) {
  if (key == "data") {
    t.data = v.get<std::string>();
  } else if (key == "out") {
    t.out = v.get<std::string>();
  } else if (key == "init_from") {
    t.init_from = v.get<std::string>();
  } else if (key == "hidden") {
    t.hidden = v.get<std::vector<int>>();
  } else if (key == "loss") {
    t.loss.calibration = loss_from_flag(v.get<std::string>());
  } else if (key == "emp_risk") {
    t.loss.empirical = emp_risk_from_flag(v.get<std::string>());
  } else if (key == "lambda") {
    t.loss.lambda = v.get<double>();
  } else if (key == "dof") {
    t.loss.dof = v.get<int>();
  } else if (key == "constraints") {
    t.loss.constraints = v.get<int>();
  } else if (key == "smooth_l1_delta") {
    t.loss.smooth_l1_delta = v.get<double>();
  } else if (key == "epochs") {
    t.epochs = v.get<std::size_t>();
  } else if (key == "batch_size") {
    t.batch_size = v.get<std::size_t>();
  } else if (key == "lr") {
    t.learning_rate = v.get<double>();
  } else if (key == "momentum") {
    t.momentum = v.get<double>();
  } else if (key == "seed") {
    t.seed = v.get<std::uint64_t>();
  } else {
    return false;
  }
  return true;
}

void train_to_json(nlohmann::json& j, const TrainRun& t, bool with_run_keys) {
  if (with_run_keys) {
    j["data"] = t.data.string();
    j["out"] = t.out.string();
    j["seed"] = t.seed;
  }
  j["init_from"] = t.init_from.string();
  j["hidden"] = t.hidden;
  j["loss"] = loss_flag(t.loss.calibration);
  j["emp_risk"] = emp_risk_flag(t.loss.empirical);
  j["lambda"] = t.loss.lambda;
  j["dof"] = t.loss.dof;
  j["constraints"] = t.loss.constraints;
  j["smooth_l1_delta"] = t.loss.smooth_l1_delta;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.learning_rate;
  j["momentum"] = t.momentum;
}

[[noreturn]] void unknown_key(const std::string& key) {
  throw ConfigError("config: unknown key '" + key + "'");
}

// Returns its argument by reference: callers iterate the result, so a
// by-value copy would die before the loop body runs.
const nlohmann::json& must_object(const nlohmann::json& v, const char* what) {
  if (!v.is_object()) {
    throw ConfigError(std::string("config: '") + what +
                      "' must be a JSON object");
  }
  return v;
}

}  // namespace

std::string GenDataRun::to_json() const {
  nlohmann::json j;
  j["command"] = "gen-data";
  j["format_version"] = kRunConfigVersion;
  j["seed"] = seed;
  j["out"] = out.string();
  synth_to_json(j, data);
  return j.dump(2) + "\n";
}

void GenDataRun::apply_json(const std::string& text) {
  const nlohmann::json j = parse_config(text);
  try {
    for (const auto& [key, v] : j.items()) {
      if (apply_meta_key(key, v, "gen-data")) continue;
      if (key == "seed") {
        seed = v.get<std::uint64_t>();
      } else if (key == "out") {
        out = v.get<std::string>();
      } else if (!apply_synth_key(data, key, v)) {
        unknown_key(key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

std::string TrainRun::to_json() const {
  nlohmann::json j;
  j["command"] = "train";
  j["format_version"] = kRunConfigVersion;
  train_to_json(j, *this, true);
  return j.dump(2) + "\n";
}

void TrainRun::apply_json(const std::string& text) {
  const nlohmann::json j = parse_config(text);
  try {
    for (const auto& [key, v] : j.items()) {
      if (apply_meta_key(key, v, "train")) continue;
      if (!apply_train_key(*this, key, v)) unknown_key(key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

std::string EvalRun::to_json() const {
  nlohmann::json j;
  j["command"] = "eval";
  j["format_version"] = kRunConfigVersion;
  j["data"] = data.string();
  j["checkpoint"] = checkpoint.string();
  j["out"] = out.string();
  j["split"] = split_flag(split);
  j["oracle"] = oracle;
  j["temperature_scale"] = temperature_scale;
  j["bins"] = metrics.bins;
  j["dof"] = metrics.dof;
  j["constraints"] = metrics.constraints;
  j["eval_seed"] = metrics.eval_seed;
  j["smooth_l1_delta"] = metrics.smooth_l1_delta;
  j["confidences"] = metrics.confidences;
  return j.dump(2) + "\n";
}

void EvalRun::apply_json(const std::string& text) {
  const nlohmann::json j = parse_config(text);
  try {
    for (const auto& [key, v] : j.items()) {
      if (apply_meta_key(key, v, "eval")) continue;
      if (key == "data") {
        data = v.get<std::string>();
      } else if (key == "checkpoint") {
        checkpoint = v.get<std::string>();
      } else if (key == "out") {
        out = v.get<std::string>();
      } else if (key == "split") {
        split = split_from_flag(v.get<std::string>());
      } else if (key == "oracle") {
        oracle = v.get<bool>();
      } else if (key == "temperature_scale") {
        temperature_scale = v.get<bool>();
      } else if (key == "bins") {
        metrics.bins = v.get<int>();
      } else if (key == "dof") {
        metrics.dof = v.get<int>();
      } else if (key == "constraints") {
        metrics.constraints = v.get<int>();
      } else if (key == "eval_seed") {
        metrics.eval_seed = v.get<std::uint64_t>();
      } else if (key == "smooth_l1_delta") {
        metrics.smooth_l1_delta = v.get<double>();
      } else if (key == "confidences") {
        metrics.confidences = v.get<std::vector<double>>();
      } else {
        unknown_key(key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

std::string SweepRun::to_json() const {
  nlohmann::json j;
  j["command"] = "sweep";
  j["format_version"] = kRunConfigVersion;
  j["over"] = sweep_flag(kind);
  j["values"] = values;
  j["seeds"] = seeds;
  j["out"] = out.string();
  j["parallel"] = parallel;
  nlohmann::json dj;
  synth_to_json(dj, data);
  j["data"] = dj;
  nlohmann::json tj;
  train_to_json(tj, train, false);
  j["train"] = tj;
  return j.dump(2) + "\n";
}

void SweepRun::apply_json(const std::string& text) {
  const nlohmann::json j = parse_config(text);
  try {
    for (const auto& [key, v] : j.items()) {
      if (apply_meta_key(key, v, "sweep")) continue;
      if (key == "over") {
        kind = sweep_from_flag(v.get<std::string>());
      } else if (key == "values") {
        values = v.get<std::vector<double>>();
      } else if (key == "seeds") {
        seeds = v.get<std::vector<std::uint64_t>>();
      } else if (key == "out") {
        out = v.get<std::string>();
      } else if (key == "parallel") {
        parallel = v.get<int>();
      } else if (key == "data") {
        for (const auto& [dk, dv] : must_object(v, "data").items()) {
          if (!apply_synth_key(data, dk, dv)) unknown_key("data." + dk);
        }
      } else if (key == "train") {
        for (const auto& [tk, tv] : must_object(v, "train").items()) {
          if (!apply_train_key(train, tk, tv)) unknown_key("train." + tk);
        }
      } else {
        unknown_key(key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

SynthDataset run_gen_data(const GenDataRun& run) {
  if (run.out.empty()) throw ConfigError("gen-data: --out is required");
  run.data.validate();
  fs::create_directories(run.out);
  SynthDataset dataset = generate(run.data, run.seed);
  save(dataset, run.out / "dataset.json");
  write_text(run.out / "config.json", run.to_json());
  return dataset;
}

TrainResult run_training(const TrainRun& run) {
  if (run.data.empty()) throw ConfigError("train: --data is required");
  return run_training(run, load(run.data));
}

TrainResult run_training(const TrainRun& run, const SynthDataset& data) {
  run.loss.validate();
  if (run.out.empty()) throw ConfigError("train: --out is required");
  const SplitView tv = view(data, Split::Train);
  if (tv.count < 2) throw ConfigError("train: train split is empty");

  MlpRegressor model = [&] {
    if (!run.init_from.empty()) {
      MlpRegressor loaded = MlpRegressor::load(run.init_from);
      if (loaded.config().in_dim() != static_cast<int>(data.feature_dim)) {
        throw ConfigError(
            "train: checkpoint expects " +
            std::to_string(loaded.config().in_dim()) +
            " features, dataset has " + std::to_string(data.feature_dim));
      }
      return loaded;
    }
    MlpConfig mc;
    mc.layer_sizes.push_back(static_cast<int>(data.feature_dim));
    for (int h : run.hidden) mc.layer_sizes.push_back(h);
    mc.layer_sizes.push_back(4);  // mu and sigma channels for the 2-D target
    mc.validate();
    Rng init_rng(derive_seed(run.seed, 0));
    return MlpRegressor::initialized(std::move(mc), init_rng);
  }();

  const bool has_fcal = run.loss.calibration == CalibrationKind::FcalKl ||
                        run.loss.calibration == CalibrationKind::FcalWass;
  const std::size_t n_residuals = 2 * tv.count;
  HyperConstraintAssignment log_assignment;
  if (has_fcal) {
    if (n_residuals < static_cast<std::size_t>(run.loss.dof)) {
      throw ConfigError("train: --dof " + std::to_string(run.loss.dof) +
                        " exceeds the " + std::to_string(n_residuals) +
                        " train-split residuals");
    }
    // One frozen draw makes the logged fcal column track the same statistic
    // across epochs instead of resampling noise into the curve.
    Rng log_rng(derive_seed(run.seed, 2));
    log_assignment = draw_hyperconstraint_assignment(
        n_residuals, run.loss.dof, run.loss.constraints, log_rng);
  }

  std::string log_text = "epoch,emp_risk,fcal_loss,combined\n";
  TrainResult result;
  auto log_row = [&](std::size_t epoch) {
    const auto p = model.predict(tv.x, tv.count);
    const double emp = empirical_risk(p.mu, p.sigma, tv.y, run.loss);
    double cal = 0.0;
    switch (run.loss.calibration) {
      case CalibrationKind::None:
        break;
      case CalibrationKind::FcalKl:
      case CalibrationKind::FcalWass: {
        const auto z = residuals(p.mu, p.sigma, tv.y);
        cal = fcal_loss(z, log_assignment, run.loss.calibration);
        break;
      }
      case CalibrationKind::PerSampleVariance:
        cal = per_sample_calibration_loss(p.mu, p.sigma, tv.y);
        break;
    }
    const double combined = run.loss.calibration == CalibrationKind::None
                                ? emp
                                : combined_loss(emp, cal, run.loss.lambda);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", epoch, emp, cal,
                  combined);
    log_text += buf;
    result.emp_risk = emp;
    result.calibration = cal;
    result.combined = combined;
  };

  // Contiguous batches in a fixed order; the tail is folded into the last
  // batch so every step sees at least batch_size samples.
  const std::size_t bs =
      run.batch_size == 0 ? tv.count : std::min(run.batch_size, tv.count);
  if (has_fcal && 2 * bs < static_cast<std::size_t>(run.loss.dof)) {
    throw ConfigError("train: --batch-size " + std::to_string(bs) +
                      " yields fewer residuals than --dof " +
                      std::to_string(run.loss.dof));
  }
  std::vector<std::pair<std::size_t, std::size_t>> batches;
  std::size_t begin = 0;
  while (tv.count - begin >= 2 * bs) {
    batches.emplace_back(begin, bs);
    begin += bs;
  }
  batches.emplace_back(begin, tv.count - begin);

  const SgdConfig opt{run.learning_rate, run.momentum};
  SgdState state;
  Rng train_rng(derive_seed(run.seed, 1));
  log_row(0);
  for (std::size_t epoch = 1; epoch <= run.epochs; ++epoch) {
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Batch batch;
      batch.x = tv.x.subspan(batches[b].first * data.feature_dim,
                             batches[b].second * data.feature_dim);
      batch.y = tv.y.subspan(batches[b].first * 2, batches[b].second * 2);
      batch.count = batches[b].second;
      try {
        train_step(model, batch, run.loss, opt, state, train_rng);
      } catch (const std::exception& e) {
        // Keep the failure class but point at where in the run it happened.
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + ": " + e.what());
      }
    }
    log_row(epoch);
  }

  fs::create_directories(run.out);
  result.checkpoint = run.out / "checkpoint.json";
  model.save(result.checkpoint);
  result.log = run.out / "training_log.csv";
  write_text(result.log, log_text);
  write_text(run.out / "config.json", run.to_json());
  return result;
}

MetricsReport run_eval(const EvalRun& run) {
  if (run.data.empty()) throw ConfigError("eval: --data is required");
  return run_eval(run, load(run.data));
}

MetricsReport run_eval(const EvalRun& run, const SynthDataset& data) {
  if (run.out.empty()) throw ConfigError("eval: --out is required");
  if (!run.oracle && run.checkpoint.empty()) {
    throw ConfigError("eval: --checkpoint is required unless --oracle is set");
  }
  const SplitView sv = view(data, run.split);
  const SplitView vv = view(data, Split::Val);
  if (sv.count == 0 || vv.count == 0) {
    throw ConfigError("eval: dataset is too small to populate its splits");
  }

  std::vector<double> mu, sigma, val_mu, val_sigma;
  if (run.oracle) {
    mu.assign(sv.y_clean.begin(), sv.y_clean.end());
    sigma.assign(sv.sigma.begin(), sv.sigma.end());
    val_mu.assign(vv.y_clean.begin(), vv.y_clean.end());
    val_sigma.assign(vv.sigma.begin(), vv.sigma.end());
  } else {
    const MlpRegressor model = MlpRegressor::load(run.checkpoint);
    if (model.config().in_dim() != static_cast<int>(data.feature_dim) ||
        model.config().out_dim() != 2) {
      throw ConfigError("eval: checkpoint shape does not match the dataset");
    }
    auto p = model.predict(sv.x, sv.count);
    mu = std::move(p.mu);
    sigma = std::move(p.sigma);
    auto pv = model.predict(vv.x, vv.count);
    val_mu = std::move(pv.mu);
    val_sigma = std::move(pv.sigma);
  }

  std::optional<double> temperature;
  if (run.temperature_scale) {
    const TemperatureModel tm = fit_temperature(val_mu, val_sigma, vv.y);
    for (double& s : sigma) s *= tm.t;
    for (double& s : val_sigma) s *= tm.t;
    temperature = tm.t;
  }

  MetricsReport report =
      evaluate_params(mu, sigma, sv.y, sv.y_clean, sv.count, 2, run.metrics);
  report.temperature = temperature;
  report.val_nll = nll_loss(val_mu, val_sigma, vv.y);

  fs::create_directories(run.out);
  write_text(run.out / "metrics.json", to_json_string(report));
  write_text(run.out / "reliability_z.csv",
             reliability_csv(report.reliability_z));
  write_text(run.out / "reliability_q.csv",
             reliability_csv(report.reliability_q));
  write_text(run.out / "config.json", run.to_json());
  return report;
}

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct SweepRow {
  std::string setting;
  std::string seed;
  double smooth_l1 = kNan;
  double ece_z = kNan;
  double ece_q = kNan;
  double nll = kNan;
  double baseline_smooth_l1 = kNan;
  double pct_drop = kNan;
  std::string error;  // nonempty when the child run threw
};

std::string format_setting(SweepKind kind, double value) {
  char buf[40];
  if (kind == SweepKind::Dof) {
    std::snprintf(buf, sizeof buf, "%d", static_cast<int>(value));
  } else {
    std::snprintf(buf, sizeof buf, "%.17g", value);
  }
  return buf;
}

double median_of(std::vector<double> xs) {
  for (double x : xs) {
    if (std::isnan(x)) return kNan;
  }
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

void fill_from_report(SweepRow& row, const MetricsReport& report) {
  // Deterministic performance is scored against the noise-free labels,
  // which every synthetic dataset carries.
  row.smooth_l1 = report.smooth_l1_clean.value_or(report.smooth_l1);
  row.ece_z = report.ece_z;
  row.ece_q = report.ece_q;
  row.nll = report.nll;
}

SweepRow execute_sweep_child(const SweepRun& run, std::size_t value_idx,
                             std::size_t seed_idx) {
  const double value = run.values[value_idx];
  const std::uint64_t seed = run.seeds[seed_idx];
  SweepRow row;
  row.setting = format_setting(run.kind, value);
  row.seed = std::to_string(seed);
  try {
    SynthConfig dc = run.data;
    TrainRun tr = run.train;
    tr.data.clear();
    tr.seed = seed;
    switch (run.kind) {
      case SweepKind::Lambda:
        tr.loss.lambda = value;
        break;
      case SweepKind::Dof:
        tr.loss.dof = static_cast<int>(value);
        break;
      case SweepKind::Gamma:
        dc.noise = NoiseKind::GammaMismatch;
        dc.gamma_shape = value;
        break;
    }
    const fs::path child = run.out / "runs" /
                           (sweep_flag(run.kind) + "_" + row.setting) /
                           ("seed_" + row.seed);
    const SynthDataset dataset = generate(dc, seed);

    EvalRun er;
    er.split = Split::Test;
    er.metrics.smooth_l1_delta = run.train.loss.smooth_l1_delta;

    if (run.kind == SweepKind::Gamma) {
      // Same data, same budget, no calibration term: the lambda = 0 anchor
      // for the percent-drop column.
      TrainRun base = tr;
      base.loss.calibration = CalibrationKind::None;
      base.out = child / "base";
      const TrainResult base_trained = run_training(base, dataset);
      EvalRun base_eval = er;
      base_eval.checkpoint = base_trained.checkpoint;
      base_eval.out = child / "base" / "eval";
      const MetricsReport base_report = run_eval(base_eval, dataset);

      tr.out = child / "fcal";
      const TrainResult trained = run_training(tr, dataset);
      er.checkpoint = trained.checkpoint;
      er.out = child / "fcal" / "eval";
      const MetricsReport report = run_eval(er, dataset);

      fill_from_report(row, report);
      row.baseline_smooth_l1 =
          base_report.smooth_l1_clean.value_or(base_report.smooth_l1);
      row.pct_drop =
          100.0 * (row.smooth_l1 - row.baseline_smooth_l1) /
          row.baseline_smooth_l1;
    } else {
      tr.out = child / "train";
      const TrainResult trained = run_training(tr, dataset);
      er.checkpoint = trained.checkpoint;
      er.out = child / "eval";
      const MetricsReport report = run_eval(er, dataset);
      fill_from_report(row, report);
    }
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

}  // namespace

SweepResult run_sweep(const SweepRun& run) {
  if (run.out.empty()) throw ConfigError("sweep: --out is required");
  if (run.values.empty()) throw ConfigError("sweep: --values must be nonempty");
  if (run.seeds.empty()) throw ConfigError("sweep: --seeds must be nonempty");
  if (run.parallel < 1) throw ConfigError("sweep: --parallel must be >= 1");
  for (double v : run.values) {
    switch (run.kind) {
      case SweepKind::Lambda:
        if (!(v >= 0.0 && v <= 1.0)) {
          throw ConfigError("sweep: lambda value " + std::to_string(v) +
                            " is outside [0, 1]");
        }
        break;
      case SweepKind::Dof:
        if (v != std::floor(v) || v < 2.0) {
          throw ConfigError("sweep: K values must be integers >= 2");
        }
        break;
      case SweepKind::Gamma:
        if (!(v > 0.0)) {
          throw ConfigError("sweep: gamma values must be positive");
        }
        break;
    }
  }
  const bool needs_fcal = run.kind != SweepKind::Lambda;
  const bool train_has_fcal =
      run.train.loss.calibration == CalibrationKind::FcalKl ||
      run.train.loss.calibration == CalibrationKind::FcalWass;
  if (needs_fcal && !train_has_fcal) {
    throw ConfigError("sweep: this sweep needs --loss fcal-kl or fcal-wass");
  }
  if (run.kind == SweepKind::Lambda &&
      run.train.loss.calibration == CalibrationKind::None) {
    throw ConfigError("sweep: lambda sweep needs a calibration term to weigh");
  }

  fs::create_directories(run.out);
  const std::size_t total = run.values.size() * run.seeds.size();
  std::vector<SweepRow> rows(total);
  auto job = [&](std::size_t flat) {
    rows[flat] = execute_sweep_child(run, flat / run.seeds.size(),
                                     flat % run.seeds.size());
  };
  if (run.parallel == 1 || total == 1) {
    for (std::size_t i = 0; i < total; ++i) job(i);
  } else {
    std::atomic<std::size_t> next{0};
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(run.parallel), total);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < total;) job(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  const bool gamma = run.kind == SweepKind::Gamma;
  std::string csv = gamma ? "setting,seed,smooth_l1,ece_z,ece_q,nll,"
                            "baseline_smooth_l1,pct_drop\n"
                          : "setting,seed,smooth_l1,ece_z,ece_q,nll\n";
  auto append_row = [&](const std::string& setting, const std::string& seed,
                        std::initializer_list<double> cells) {
    csv += setting;
    csv += ',';
    csv += seed;
    char buf[40];
    for (double c : cells) {
      std::snprintf(buf, sizeof buf, ",%.17g", c);
      csv += buf;
    }
    csv += '\n';
  };
  for (const SweepRow& r : rows) {
    if (gamma) {
      append_row(r.setting, r.seed,
                 {r.smooth_l1, r.ece_z, r.ece_q, r.nll, r.baseline_smooth_l1,
                  r.pct_drop});
    } else {
      append_row(r.setting, r.seed, {r.smooth_l1, r.ece_z, r.ece_q, r.nll});
    }
  }
  for (std::size_t vi = 0; vi < run.values.size(); ++vi) {
    auto column = [&](double SweepRow::* field) {
      std::vector<double> xs;
      xs.reserve(run.seeds.size());
      for (std::size_t si = 0; si < run.seeds.size(); ++si) {
        xs.push_back(rows[vi * run.seeds.size() + si].*field);
      }
      return median_of(std::move(xs));
    };
    const std::string setting = format_setting(run.kind, run.values[vi]);
    if (gamma) {
      append_row(setting, "median",
                 {column(&SweepRow::smooth_l1), column(&SweepRow::ece_z),
                  column(&SweepRow::ece_q), column(&SweepRow::nll),
                  column(&SweepRow::baseline_smooth_l1),
                  column(&SweepRow::pct_drop)});
    } else {
      append_row(setting, "median",
                 {column(&SweepRow::smooth_l1), column(&SweepRow::ece_z),
                  column(&SweepRow::ece_q), column(&SweepRow::nll)});
    }
  }

  SweepResult result;
  result.csv = run.out / "sweep.csv";
  write_text(result.csv, csv);
  std::string errors;
  for (const SweepRow& r : rows) {
    if (!r.error.empty()) {
      ++result.failed;
      errors += r.setting + "," + r.seed + ": " + r.error + "\n";
    }
  }
  if (result.failed > 0) write_text(run.out / "errors.log", errors);
  write_text(run.out / "config.json", run.to_json());
  return result;
}

std::string render_report(const std::filesystem::path& dir) {
  if (!fs::exists(dir)) throw IoError("no such directory: " + dir.string());
  std::string out;

  if (fs::exists(dir / "config.json")) {
    const nlohmann::json j = parse_config(read_text(dir / "config.json"));
    out += "config: " + j.dump() + "\n";
  }
  if (fs::exists(dir / "dataset.json")) {
    const nlohmann::json j = parse_config(read_text(dir / "dataset.json"));
    const nlohmann::json c =
        j.contains("config") ? j["config"] : nlohmann::json::object();
    out += "dataset: ";
    out += c.contains("count") ? c["count"].dump() : "?";
    out += " samples, noise ";
    out += c.contains("noise") ? c["noise"].get<std::string>() : "?";
    out += ", seed ";
    out += j.contains("seed") ? j["seed"].dump() : "?";
    out += "\n";
  }
  if (fs::exists(dir / "training_log.csv")) {
    const std::string text = read_text(dir / "training_log.csv");
    std::istringstream lines(text);
    std::string line, first, last;
    std::getline(lines, line);  // header
    std::size_t count = 0;
    while (std::getline(lines, line)) {
      if (count == 0) first = line;
      last = line;
      ++count;
    }
    out += "training: " + std::to_string(count) + " logged rows";
    if (count > 0) {
      out += "\n  first (epoch,emp_risk,fcal_loss,combined): " + first;
      out += "\n  last  (epoch,emp_risk,fcal_loss,combined): " + last;
    }
    out += "\n";
  }
  if (fs::exists(dir / "metrics.json")) {
    const nlohmann::json j = parse_config(read_text(dir / "metrics.json"));
    out += "metrics:\n";
    for (const auto& [key, v] : j.items()) {
      if (key == "consistency") {
        for (const auto& [c, rate] : v.items()) {
          out += "  consistency@" + c + " = " + rate.dump() + "\n";
        }
      } else {
        out += "  " + key + " = " + v.dump() + "\n";
      }
    }
  }
  if (fs::exists(dir / "sweep.csv")) {
    const std::string text = read_text(dir / "sweep.csv");
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    out += "sweep medians (" + line + "):\n";
    while (std::getline(lines, line)) {
      if (line.find(",median,") != std::string::npos) {
        out += "  " + line + "\n";
      }
    }
  }
  if (fs::exists(dir / "errors.log")) {
    out += "errors:\n";
    std::istringstream lines(read_text(dir / "errors.log"));
    std::string line;
    while (std::getline(lines, line)) out += "  " + line + "\n";
  }

  if (out.empty()) {
    throw IoError("nothing to report: " + dir.string() +
                  " holds no known run artifacts");
  }
  return out;
}

}  // namespace fcal
