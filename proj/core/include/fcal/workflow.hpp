#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fcal/losses.hpp"
#include "fcal/metrics.hpp"
#include "fcal/synthdata.hpp"

namespace fcal {

/// Runnable command configurations. The CLI parses flags into these structs
/// and the test harness fills them directly; either way the run functions
/// below do the work, write the artifacts, and echo the fully resolved
/// configuration into the output directory as config.json. Every echo can be
/// fed back through --config to reproduce the run.

inline constexpr int kRunConfigVersion = 1;

// Flag-vocabulary spellings, shared by option parsing and config echoes.
std::string noise_flag(NoiseKind kind);
NoiseKind noise_from_flag(const std::string& name);
std::string split_flag(Split split);
Split split_from_flag(const std::string& name);
std::string loss_flag(CalibrationKind kind);
CalibrationKind loss_from_flag(const std::string& name);
std::string emp_risk_flag(EmpiricalRisk kind);
EmpiricalRisk emp_risk_from_flag(const std::string& name);

struct GenDataRun {
  SynthConfig data;
  std::uint64_t seed = 1;
  std::filesystem::path out;

  std::string to_json() const;
  /// Merge config-file keys over the current values; unknown keys are
  /// rejected so typos fail loudly. Throws ConfigError.
  void apply_json(const std::string& text);
};

/// Generate a dataset and write out/dataset.json + out/dataset.csv.
SynthDataset run_gen_data(const GenDataRun& run);

struct TrainRun {
  std::filesystem::path data;       // dataset manifest
  std::filesystem::path out;
  std::filesystem::path init_from;  // checkpoint to warm-start from
  std::vector<int> hidden = {32, 32};
  LossSpec loss;
  std::size_t epochs = 150;
  std::size_t batch_size = 512;  // 0 = full batch; a short tail is folded
                                 // into the preceding batch
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 1;

  std::string to_json() const;
  void apply_json(const std::string& text);
};

struct TrainResult {
  // Values of the last training-log row (full train split, current params).
  double emp_risk = 0.0;
  double calibration = 0.0;
  double combined = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
};

/// Train on the dataset's train split and write out/checkpoint.json plus
/// out/training_log.csv (columns epoch,emp_risk,fcal_loss,combined; the
/// epoch-0 row is evaluated before any update, so a warm-started run opens
/// with exactly the donor run's final numbers).
TrainResult run_training(const TrainRun& run);
TrainResult run_training(const TrainRun& run, const SynthDataset& data);

struct EvalRun {
  std::filesystem::path data;
  std::filesystem::path checkpoint;  // ignored when oracle is set
  std::filesystem::path out;
  Split split = Split::Test;
  /// Evaluate the constructed oracle predictor (mu = noise-free labels,
  /// sigma = true noise scale) instead of a checkpoint.
  bool oracle = false;
  /// Fit a temperature on the validation split and rescale sigmas with it
  /// before computing metrics.
  bool temperature_scale = false;
  MetricsConfig metrics;

  std::string to_json() const;
  void apply_json(const std::string& text);
};

/// Evaluate on the chosen split and write out/metrics.json plus
/// out/reliability_z.csv and out/reliability_q.csv. The report always
/// carries the validation NLL (after temperature scaling when enabled).
MetricsReport run_eval(const EvalRun& run);
MetricsReport run_eval(const EvalRun& run, const SynthDataset& data);

enum class SweepKind { Lambda, Dof, Gamma };

std::string sweep_flag(SweepKind kind);
SweepKind sweep_from_flag(const std::string& name);

struct SweepRun {
  SweepKind kind = SweepKind::Lambda;
  std::vector<double> values;  // lambda weights, K values, or gamma shapes
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::filesystem::path out;
  int parallel = 1;  // worker threads; children never share output dirs
  SynthConfig data;  // base dataset recipe (gamma sweep overrides the noise)
  TrainRun train;    // base training recipe (data/out/seed set per child)

  std::string to_json() const;
  void apply_json(const std::string& text);
};

struct SweepResult {
  std::filesystem::path csv;
  int failed = 0;  // children that threw; their rows hold nan
};

/// Train + eval per (setting, seed) into out/runs/..., then write
/// out/sweep.csv: one row per pair (columns setting,seed,smooth_l1,ece_z,
/// ece_q,nll, where smooth_l1 scores mu against the noise-free labels),
/// followed by one median row per setting with "median" in the seed column.
/// The gamma sweep also trains a lambda=0 baseline per pair and appends
/// baseline_smooth_l1 and pct_drop columns (percent increase of smooth_l1
/// over that baseline). Failures are recorded in out/errors.log and as nan
/// rows; the sweep keeps going.
SweepResult run_sweep(const SweepRun& run);

/// Human-readable digest of whatever run artifacts live in `dir`
/// (config.json, dataset.json, training_log.csv, metrics.json, sweep.csv).
/// Throws IoError when none are present.
std::string render_report(const std::filesystem::path& dir);

}  // namespace fcal
