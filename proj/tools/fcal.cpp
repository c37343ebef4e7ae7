// Command-line front end: every command is deterministic given its flags,
// echoes its resolved configuration next to its outputs, and exits 0 on
// success, 1 on runtime failure, 2 on usage or config errors.

#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fcal/errors.hpp"
#include "fcal/workflow.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw fcal::ConfigError("--config: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibrated regression with distribution-matching losses"};
  app.require_subcommand(1);

  // gen-data ---------------------------------------------------------------
  fcal::GenDataRun gd;
  std::string gd_noise;
  std::string gd_config;
  CLI::App* gen =
      app.add_subcommand("gen-data", "Generate a synthetic tracking dataset");
  gen->add_option("--out", gd.out, "Output directory");
  gen->add_option("--seed", gd.seed, "Generator seed");
  gen->add_option("--config", gd_config,
                  "JSON config supplying defaults (flags still win)");
  gen->add_option("--noise", gd_noise, "Noise model: homo, hetero, or gamma");
  gen->add_option("--n", gd.data.count, "Sample count (split 3:1:1)");
  gen->add_option("--distractors", gd.data.distractors,
                  "Distractor discs per sample");
  gen->add_option("--canvas", gd.data.canvas, "Canvas side length");
  gen->add_option("--radius-min", gd.data.radius_min, "Smallest disc radius");
  gen->add_option("--radius-max", gd.data.radius_max, "Largest disc radius");
  gen->add_option("--sigma", gd.data.sigma, "Noise scale (homo only)");
  gen->add_option("--sigma-min", gd.data.sigma_min,
                  "Noise scale far from distractors");
  gen->add_option("--sigma-range", gd.data.sigma_range,
                  "Extra noise scale at zero distractor gap");
  gen->add_option("--gamma", gd.data.gamma_shape,
                  "Gamma noise shape (gamma only)")
      ->check(CLI::PositiveNumber);

  // train ------------------------------------------------------------------
  fcal::TrainRun tr;
  std::string tr_loss;
  std::string tr_emp;
  std::string tr_config;
  CLI::App* train = app.add_subcommand("train", "Train a regressor");
  train->add_option("--data", tr.data, "Dataset manifest (dataset.json)");
  train->add_option("--out", tr.out, "Output directory");
  train->add_option("--seed", tr.seed, "Init and batch-draw seed");
  train->add_option("--config", tr_config,
                    "JSON config supplying defaults (flags still win)");
  train->add_option("--init-from", tr.init_from,
                    "Checkpoint to warm-start from");
  train->add_option("--hidden", tr.hidden, "Hidden layer widths");
  train->add_option("--loss", tr_loss,
                    "Objective: nll, fcal-kl, fcal-wass, or per-sample");
  train->add_option("--emp-risk", tr_emp,
                    "Empirical risk term: nll or smooth-l1");
  train->add_option("--lambda", tr.loss.lambda,
                    "Calibration weight in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  train->add_option("--dof", tr.loss.dof,
                    "Residuals per hyper-constraint (K)");
  train->add_option("--constraints", tr.loss.constraints,
                    "Hyper-constraints per batch (H)");
  train->add_option("--smooth-l1-delta", tr.loss.smooth_l1_delta,
                    "Smooth-L1 transition point");
  train->add_option("--epochs", tr.epochs, "Training epochs");
  train->add_option("--batch-size", tr.batch_size, "Batch size (0 = full)");
  train->add_option("--lr", tr.learning_rate, "Learning rate");
  train->add_option("--momentum", tr.momentum, "SGD momentum");

  // eval -------------------------------------------------------------------
  fcal::EvalRun ev;
  std::string ev_split;
  std::string ev_config;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--data", ev.data, "Dataset manifest (dataset.json)");
  eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
  eval->add_option("--out", ev.out, "Output directory");
  eval->add_option("--config", ev_config,
                   "JSON config supplying defaults (flags still win)");
  eval->add_option("--split", ev_split, "Split to score: train, val, test");
  eval->add_flag("--oracle", ev.oracle,
                 "Score the oracle predictor (true means and noise scales)");
  eval->add_flag("--temperature-scale", ev.temperature_scale,
                 "Fit a temperature on the val split and rescale sigmas");
  eval->add_option("--bins", ev.metrics.bins, "Calibration bins");
  eval->add_option("--dof", ev.metrics.dof,
                   "Residuals per evaluation hyper-constraint (K)");
  eval->add_option("--constraints", ev.metrics.constraints,
                   "Evaluation hyper-constraints (H)");
  eval->add_option("--eval-seed", ev.metrics.eval_seed,
                   "Seed for the evaluation hyper-constraint draw");
  eval->add_option("--smooth-l1-delta", ev.metrics.smooth_l1_delta,
                   "Smooth-L1 transition point");
  eval->add_option("--confidences", ev.metrics.confidences,
                   "Consistency-rate confidence levels");

  // sweep ------------------------------------------------------------------
  fcal::SweepRun sw;
  std::string sw_over;
  std::string sw_noise;
  std::string sw_loss;
  std::string sw_emp;
  std::string sw_config;
  CLI::App* sweep =
      app.add_subcommand("sweep", "Train + eval over a grid of settings");
  sweep->add_option("--over", sw_over, "Swept knob: lambda, K, or gamma");
  sweep->add_option("--values", sw.values, "Grid values for the swept knob");
  sweep->add_option("--seeds", sw.seeds, "Seeds run per grid value");
  sweep->add_option("--out", sw.out, "Output directory");
  sweep->add_option("--config", sw_config,
                    "JSON config supplying defaults (flags still win)");
  sweep->add_option("--parallel", sw.parallel, "Concurrent child runs");
  sweep->add_option("--noise", sw_noise, "Dataset noise: homo, hetero, gamma");
  sweep->add_option("--n", sw.data.count, "Samples per dataset");
  sweep->add_option("--distractors", sw.data.distractors,
                    "Distractor discs per sample");
  sweep->add_option("--gamma", sw.data.gamma_shape,
                    "Gamma noise shape for the base dataset")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--hidden", sw.train.hidden, "Hidden layer widths");
  sweep->add_option("--loss", sw_loss,
                    "Objective: nll, fcal-kl, fcal-wass, or per-sample");
  sweep->add_option("--emp-risk", sw_emp,
                    "Empirical risk term: nll or smooth-l1");
  sweep->add_option("--lambda", sw.train.loss.lambda,
                    "Calibration weight in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  sweep->add_option("--dof", sw.train.loss.dof,
                    "Residuals per hyper-constraint (K)");
  sweep->add_option("--constraints", sw.train.loss.constraints,
                    "Hyper-constraints per batch (H)");
  sweep->add_option("--init-from", sw.train.init_from,
                    "Checkpoint every child warm-starts from");
  sweep->add_option("--epochs", sw.train.epochs, "Epochs per child run");
  sweep->add_option("--batch-size", sw.train.batch_size,
                    "Batch size (0 = full)");
  sweep->add_option("--lr", sw.train.learning_rate, "Learning rate");
  sweep->add_option("--momentum", sw.train.momentum, "SGD momentum");

  // report -----------------------------------------------------------------
  std::string report_dir;
  CLI::App* report =
      app.add_subcommand("report", "Summarize the artifacts of a finished run");
  report->add_option("dir", report_dir, "Run output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    // A --config file supplies defaults underneath the flags: load it into a
    // fresh config, then parse the command line again on top of it.
    CLI::App* chosen = app.get_subcommands().at(0);
    const std::string* config_path = chosen == gen     ? &gd_config
                                     : chosen == train ? &tr_config
                                     : chosen == eval  ? &ev_config
                                     : chosen == sweep ? &sw_config
                                                       : nullptr;
    if (config_path != nullptr && !config_path->empty()) {
      const std::string text = slurp(*config_path);
      if (chosen == gen) {
        gd = fcal::GenDataRun{};
        gd.apply_json(text);
      } else if (chosen == train) {
        tr = fcal::TrainRun{};
        tr.apply_json(text);
      } else if (chosen == eval) {
        ev = fcal::EvalRun{};
        ev.apply_json(text);
      } else {
        sw = fcal::SweepRun{};
        sw.apply_json(text);
      }
      app.clear();
      app.parse(argc, argv);
    }

    if (chosen == gen) {
      if (gen->count("--noise") > 0) {
        gd.data.noise = fcal::noise_from_flag(gd_noise);
      }
      const fcal::SynthDataset dataset = fcal::run_gen_data(gd);
      std::printf("wrote %s (%zu samples, noise %s)\n",
                  (gd.out / "dataset.json").c_str(), dataset.count(),
                  fcal::noise_flag(dataset.config.noise).c_str());
    } else if (chosen == train) {
      if (train->count("--loss") > 0) {
        tr.loss.calibration = fcal::loss_from_flag(tr_loss);
      }
      if (train->count("--emp-risk") > 0) {
        tr.loss.empirical = fcal::emp_risk_from_flag(tr_emp);
      }
      const fcal::TrainResult result = fcal::run_training(tr);
      std::printf("wrote %s\n", result.checkpoint.c_str());
      std::printf("final emp_risk %.9g, fcal_loss %.9g, combined %.9g\n",
                  result.emp_risk, result.calibration, result.combined);
    } else if (chosen == eval) {
      if (eval->count("--split") > 0) ev.split = fcal::split_from_flag(ev_split);
      const fcal::MetricsReport report_out = fcal::run_eval(ev);
      std::printf("wrote %s\n", (ev.out / "metrics.json").c_str());
      std::printf("nll %.9g, ece_z %.9g, ece_q %.9g, smooth_l1 %.9g\n",
                  report_out.nll, report_out.ece_z, report_out.ece_q,
                  report_out.smooth_l1);
    } else if (chosen == sweep) {
      if (sweep->count("--over") > 0) sw.kind = fcal::sweep_from_flag(sw_over);
      if (sweep->count("--noise") > 0) {
        sw.data.noise = fcal::noise_from_flag(sw_noise);
      }
      if (sweep->count("--loss") > 0) {
        sw.train.loss.calibration = fcal::loss_from_flag(sw_loss);
      }
      if (sweep->count("--emp-risk") > 0) {
        sw.train.loss.empirical = fcal::emp_risk_from_flag(sw_emp);
      }
      const fcal::SweepResult result = fcal::run_sweep(sw);
      std::printf("wrote %s\n", result.csv.c_str());
      if (result.failed > 0) {
        std::fprintf(stderr, "%d child run(s) failed; see %s\n", result.failed,
                     (sw.out / "errors.log").c_str());
        return 1;
      }
    } else {
      std::fputs(fcal::render_report(report_dir).c_str(), stdout);
    }
  } catch (const fcal::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
