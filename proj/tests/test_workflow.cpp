#include "fcal/workflow.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fcal/errors.hpp"
#include "fcal/losses.hpp"
#include "fcal/metrics.hpp"
#include "fcal/synthdata.hpp"

using namespace fcal;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  fs::path dir = fs::temp_directory_path() / "fcal_workflow_test";
  fs::create_directories(dir);
  return dir;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = scratch_dir() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string field;
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

double num(const std::string& field) { return std::strtod(field.c_str(), nullptr); }

/// Small, fast dataset: no distractors keeps the feature width at 3.
SynthConfig tiny_data(std::size_t count = 200) {
  SynthConfig c;
  c.count = count;
  c.distractors = 0;
  return c;
}

/// Small, fast run: one narrow hidden layer, a couple of epochs, and a plain
/// NLL objective unless the test opts back into a calibration term.
TrainRun tiny_train(const fs::path& out) {
  TrainRun t;
  t.out = out;
  t.hidden = {4};
  t.epochs = 2;
  t.batch_size = 0;
  t.learning_rate = 1e-2;
  t.loss.calibration = CalibrationKind::None;
  t.loss.dof = 8;
  t.loss.constraints = 4;
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("workflow");

TEST_CASE("gen-data writes dataset, csv, and a config echo that reproduces it") {
  GenDataRun run;
  run.data = tiny_data();
  run.seed = 7;
  run.out = fresh_dir("gen_a");
  const SynthDataset a = run_gen_data(run);
  CHECK(a.count() == 200);
  CHECK(fs::exists(run.out / "dataset.json"));
  CHECK(fs::exists(run.out / "dataset.csv"));
  CHECK(slurp(run.out / "config.json") == run.to_json());

  GenDataRun again;
  again.apply_json(slurp(run.out / "config.json"));
  again.out = fresh_dir("gen_b");
  run_gen_data(again);
  CHECK(slurp(run.out / "dataset.json") == slurp(again.out / "dataset.json"));
  CHECK(slurp(run.out / "dataset.csv") == slurp(again.out / "dataset.csv"));
}

TEST_CASE("gen-data requires an output directory") {
  GenDataRun run;
  run.data = tiny_data();
  CHECK_THROWS_AS(run_gen_data(run), ConfigError);
}

TEST_CASE("training writes checkpoint, log, and config echo") {
  const SynthDataset data = generate(tiny_data(), 3);
  TrainRun run = tiny_train(fresh_dir("train_basic"));
  run.epochs = 3;
  const TrainResult result = run_training(run, data);

  CHECK(result.checkpoint == run.out / "checkpoint.json");
  CHECK(result.log == run.out / "training_log.csv");
  CHECK(fs::exists(result.checkpoint));
  CHECK(slurp(run.out / "config.json") == run.to_json());

  const auto rows = lines_of(slurp(result.log));
  REQUIRE(rows.size() == 5);  // header + epochs 0..3
  CHECK(rows[0] == "epoch,emp_risk,fcal_loss,combined");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = fields_of(rows[i]);
    REQUIRE(f.size() == 4);
    CHECK(f[0] == std::to_string(i - 1));
    // No calibration term: the fcal column is zero and combined == emp_risk.
    CHECK(f[2] == "0");
    CHECK(f[1] == f[3]);
  }
  const auto last = fields_of(rows.back());
  CHECK(num(last[1]) == result.emp_risk);
  CHECK(num(last[3]) == result.combined);
}

TEST_CASE("training is reproducible byte for byte") {
  const SynthDataset data = generate(tiny_data(), 5);
  TrainRun a = tiny_train(fresh_dir("train_rep_a"));
  TrainRun b = tiny_train(fresh_dir("train_rep_b"));
  run_training(a, data);
  run_training(b, data);
  CHECK(slurp(a.out / "checkpoint.json") == slurp(b.out / "checkpoint.json"));
  CHECK(slurp(a.out / "training_log.csv") == slurp(b.out / "training_log.csv"));
}

TEST_CASE("a zero-epoch warm start opens with the donor run's final numbers") {
  const SynthDataset data = generate(tiny_data(), 5);
  TrainRun donor = tiny_train(fresh_dir("warm_donor"));
  donor.epochs = 3;
  const TrainResult trained = run_training(donor, data);

  TrainRun resumed = tiny_train(fresh_dir("warm_resume"));
  resumed.init_from = trained.checkpoint;
  resumed.epochs = 0;
  const TrainResult opened = run_training(resumed, data);

  CHECK(opened.emp_risk == trained.emp_risk);
  CHECK(opened.combined == trained.combined);
  const auto rows = lines_of(slurp(opened.log));
  REQUIRE(rows.size() == 2);  // header + the epoch-0 row
  CHECK(fields_of(rows[1])[0] == "0");
  // And the reloaded parameters are the donor's, bit for bit.
  CHECK(slurp(opened.checkpoint) == slurp(trained.checkpoint));
}

TEST_CASE("zero batch size means one full-split batch") {
  const SynthDataset data = generate(tiny_data(), 9);
  TrainRun full = tiny_train(fresh_dir("batch_full"));
  full.batch_size = 0;
  TrainRun sized = tiny_train(fresh_dir("batch_sized"));
  sized.batch_size = view(data, Split::Train).count;
  run_training(full, data);
  run_training(sized, data);
  CHECK(slurp(full.out / "checkpoint.json") ==
        slurp(sized.out / "checkpoint.json"));
}

TEST_CASE("calibrated training logs a frozen fcal column") {
  const SynthDataset data = generate(tiny_data(), 11);
  TrainRun run = tiny_train(fresh_dir("train_fcal_a"));
  run.loss.calibration = CalibrationKind::FcalKl;
  run.loss.lambda = 0.3;
  const TrainResult result = run_training(run, data);

  const auto rows = lines_of(slurp(result.log));
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = fields_of(rows[i]);
    REQUIRE(f.size() == 4);
    const double emp = num(f[1]);
    const double cal = num(f[2]);
    CHECK(cal > 0.0);
    CHECK(num(f[3]) == combined_loss(emp, cal, 0.3));
  }
  CHECK(result.calibration > 0.0);

  // The logged statistic uses one frozen hyper-constraint draw, so a rerun
  // reproduces the entire curve.
  TrainRun again = run;
  again.out = fresh_dir("train_fcal_b");
  run_training(again, data);
  CHECK(slurp(result.log) == slurp(again.out / "training_log.csv"));
}

TEST_CASE("per-sample variance training logs its penalty in the fcal column") {
  const SynthDataset data = generate(tiny_data(), 13);
  TrainRun run = tiny_train(fresh_dir("train_psv"));
  run.loss.calibration = CalibrationKind::PerSampleVariance;
  run.loss.lambda = 0.4;
  run.epochs = 1;
  const TrainResult result = run_training(run, data);
  CHECK(result.calibration > 0.0);
  CHECK(result.combined == combined_loss(result.emp_risk, result.calibration, 0.4));
}

TEST_CASE("training rejects inconsistent runs") {
  const SynthDataset data = generate(tiny_data(), 3);

  TrainRun no_out = tiny_train("");
  CHECK_THROWS_AS(run_training(no_out, data), ConfigError);

  TrainRun no_data = tiny_train(fresh_dir("train_nodata"));
  CHECK_THROWS_AS(run_training(no_data), ConfigError);

  // 120 train samples give 240 residuals; K may not exceed that.
  TrainRun big_dof = tiny_train(fresh_dir("train_bigdof"));
  big_dof.loss.calibration = CalibrationKind::FcalKl;
  big_dof.loss.dof = 256;
  CHECK_THROWS_AS(run_training(big_dof, data), ConfigError);

  // A batch of 8 holds 16 residuals, fewer than K = 64.
  TrainRun small_batch = tiny_train(fresh_dir("train_smallbatch"));
  small_batch.loss.calibration = CalibrationKind::FcalKl;
  small_batch.loss.dof = 64;
  small_batch.batch_size = 8;
  CHECK_THROWS_AS(run_training(small_batch, data), ConfigError);

  // Warm-starting from a checkpoint built for another feature width.
  TrainRun donor = tiny_train(fresh_dir("train_shape_donor"));
  const TrainResult trained = run_training(donor, data);
  SynthConfig wide = tiny_data();
  wide.distractors = 2;
  const SynthDataset other = generate(wide, 3);
  TrainRun mismatched = tiny_train(fresh_dir("train_shape_mismatch"));
  mismatched.init_from = trained.checkpoint;
  CHECK_THROWS_AS(run_training(mismatched, other), ConfigError);
}

TEST_CASE("a diverging run reports the epoch and batch it died in") {
  const SynthDataset data = generate(tiny_data(), 3);
  TrainRun run = tiny_train(fresh_dir("train_diverge"));
  run.learning_rate = 1e18;
  run.epochs = 50;
  std::string message;
  try {
    run_training(run, data);
  } catch (const TrainingError& e) {
    message = e.what();
  }
  REQUIRE(!message.empty());
  CHECK(message.find("epoch ") != std::string::npos);
  CHECK(message.find("batch ") != std::string::npos);
}

TEST_CASE("oracle evaluation writes the full artifact set") {
  const SynthDataset data = generate(tiny_data(500), 17);
  EvalRun run;
  run.oracle = true;
  run.out = fresh_dir("eval_oracle");
  run.metrics.dof = 8;
  run.metrics.constraints = 64;
  const MetricsReport report = run_eval(run, data);

  CHECK(slurp(run.out / "metrics.json") == to_json_string(report));
  CHECK(slurp(run.out / "reliability_z.csv") ==
        reliability_csv(report.reliability_z));
  CHECK(slurp(run.out / "reliability_q.csv") ==
        reliability_csv(report.reliability_q));
  CHECK(slurp(run.out / "config.json") == run.to_json());
  CHECK(!report.temperature.has_value());
  REQUIRE(report.val_nll.has_value());
  CHECK(std::isfinite(*report.val_nll));
  // The oracle knows the generating process, so its z-residuals are honest.
  CHECK(report.ece_z < 0.1);

  EvalRun again = run;
  again.out = fresh_dir("eval_oracle_b");
  run_eval(again, data);
  CHECK(slurp(run.out / "metrics.json") == slurp(again.out / "metrics.json"));
}

TEST_CASE("evaluation scores the requested split") {
  const SynthDataset data = generate(tiny_data(500), 19);
  EvalRun test_split;
  test_split.oracle = true;
  test_split.out = fresh_dir("eval_split_test");
  test_split.metrics.dof = 8;
  const MetricsReport on_test = run_eval(test_split, data);
  CHECK(on_test.sample_count == view(data, Split::Test).count);

  EvalRun train_split = test_split;
  train_split.split = Split::Train;
  train_split.out = fresh_dir("eval_split_train");
  const MetricsReport on_train = run_eval(train_split, data);
  CHECK(on_train.sample_count == view(data, Split::Train).count);
  CHECK(slurp(train_split.out / "config.json").find("\"split\": \"train\"") !=
        std::string::npos);
}

TEST_CASE("temperature scaling is recorded and never hurts validation NLL") {
  const SynthDataset data = generate(tiny_data(500), 23);
  TrainRun train = tiny_train(fresh_dir("eval_temp_train"));
  train.epochs = 20;
  const TrainResult trained = run_training(train, data);

  EvalRun plain;
  plain.checkpoint = trained.checkpoint;
  plain.out = fresh_dir("eval_temp_plain");
  plain.metrics.dof = 8;
  const MetricsReport before = run_eval(plain, data);
  CHECK(!before.temperature.has_value());
  CHECK(slurp(plain.out / "metrics.json").find("\"temperature\"") ==
        std::string::npos);

  EvalRun scaled = plain;
  scaled.temperature_scale = true;
  scaled.out = fresh_dir("eval_temp_scaled");
  const MetricsReport after = run_eval(scaled, data);
  REQUIRE(after.temperature.has_value());
  CHECK(*after.temperature > 0.0);
  REQUIRE(after.val_nll.has_value());
  REQUIRE(before.val_nll.has_value());
  CHECK(*after.val_nll <= *before.val_nll + 1e-12);
  CHECK(slurp(scaled.out / "metrics.json").find("\"temperature\"") !=
        std::string::npos);
}

TEST_CASE("evaluation rejects inconsistent runs") {
  const SynthDataset data = generate(tiny_data(), 3);

  EvalRun no_out;
  no_out.oracle = true;
  CHECK_THROWS_AS(run_eval(no_out, data), ConfigError);

  EvalRun no_source;
  no_source.out = fresh_dir("eval_nosource");
  CHECK_THROWS_AS(run_eval(no_source, data), ConfigError);

  EvalRun no_data;
  no_data.oracle = true;
  no_data.out = fresh_dir("eval_nodata");
  CHECK_THROWS_AS(run_eval(no_data), ConfigError);

  // A checkpoint built for 3 features cannot score a 9-feature dataset.
  TrainRun train = tiny_train(fresh_dir("eval_shape_train"));
  const TrainResult trained = run_training(train, data);
  SynthConfig wide = tiny_data();
  wide.distractors = 2;
  const SynthDataset other = generate(wide, 3);
  EvalRun mismatched;
  mismatched.checkpoint = trained.checkpoint;
  mismatched.out = fresh_dir("eval_shape_mismatch");
  mismatched.metrics.dof = 8;
  CHECK_THROWS_AS(run_eval(mismatched, other), ConfigError);
}

TEST_CASE("config echoes round-trip through apply_json") {
  GenDataRun g;
  g.seed = 9;
  g.out = "somewhere";
  g.data.count = 777;
  g.data.noise = NoiseKind::GammaMismatch;
  g.data.gamma_shape = 3.5;
  g.data.distractors = 1;
  g.data.canvas = 50.0;
  g.data.radius_min = 1.0;
  g.data.radius_max = 4.0;
  g.data.sigma = 2.5;
  g.data.sigma_min = 0.25;
  g.data.sigma_range = 2.0;
  GenDataRun g2;
  g2.apply_json(g.to_json());
  CHECK(g2.to_json() == g.to_json());

  TrainRun t;
  t.data = "d/dataset.json";
  t.out = "t/out";
  t.init_from = "w/checkpoint.json";
  t.hidden = {3, 5};
  t.loss.calibration = CalibrationKind::FcalWass;
  t.loss.empirical = EmpiricalRisk::SmoothL1;
  t.loss.lambda = 0.4;
  t.loss.dof = 16;
  t.loss.constraints = 7;
  t.loss.smooth_l1_delta = 0.5;
  t.epochs = 9;
  t.batch_size = 17;
  t.learning_rate = 0.05;
  t.momentum = 0.8;
  t.seed = 42;
  TrainRun t2;
  t2.apply_json(t.to_json());
  CHECK(t2.to_json() == t.to_json());

  EvalRun e;
  e.data = "d/dataset.json";
  e.checkpoint = "t/out/checkpoint.json";
  e.out = "e/out";
  e.split = Split::Val;
  e.oracle = true;
  e.temperature_scale = true;
  e.metrics.bins = 7;
  e.metrics.dof = 12;
  e.metrics.constraints = 33;
  e.metrics.eval_seed = 99;
  e.metrics.smooth_l1_delta = 2.0;
  e.metrics.confidences = {0.5, 0.99};
  EvalRun e2;
  e2.apply_json(e.to_json());
  CHECK(e2.to_json() == e.to_json());

  SweepRun s;
  s.kind = SweepKind::Gamma;
  s.values = {1.0, 5.0};
  s.seeds = {4, 5};
  s.out = "s/out";
  s.parallel = 2;
  s.data = tiny_data(300);
  s.train = tiny_train("");
  s.train.loss.calibration = CalibrationKind::FcalKl;
  SweepRun s2;
  s2.apply_json(s.to_json());
  CHECK(s2.to_json() == s.to_json());
}

TEST_CASE("config parsing fails loudly") {
  TrainRun t;
  CHECK_THROWS_AS(t.apply_json("{nope"), ConfigError);
  CHECK_THROWS_AS(t.apply_json("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(t.apply_json(R"({"lrr": 0.1})"), ConfigError);
  CHECK_THROWS_AS(t.apply_json(R"({"lambda": "abc"})"), ConfigError);
  CHECK_THROWS_AS(t.apply_json(R"({"format_version": 99})"), ConfigError);
  CHECK_THROWS_AS(t.apply_json(R"({"command": "gen-data"})"), ConfigError);

  // The echo of one command cannot configure another.
  GenDataRun g;
  CHECK_THROWS_AS(g.apply_json(TrainRun().to_json()), ConfigError);

  SweepRun s;
  CHECK_THROWS_AS(s.apply_json(R"({"data": 3})"), ConfigError);
  CHECK_THROWS_AS(s.apply_json(R"({"data": {"nn": 1}})"), ConfigError);
  CHECK_THROWS_AS(s.apply_json(R"({"train": {"lrr": 1}})"), ConfigError);
}

TEST_CASE("lambda sweep writes per-seed rows and median rows") {
  SweepRun run;
  run.kind = SweepKind::Lambda;
  run.values = {0.0, 0.5};
  run.seeds = {1, 2};
  run.out = fresh_dir("sweep_lambda");
  run.data = tiny_data();
  run.train = tiny_train("");
  run.train.loss.calibration = CalibrationKind::FcalKl;
  const SweepResult result = run_sweep(run);

  CHECK(result.failed == 0);
  CHECK(!fs::exists(run.out / "errors.log"));
  CHECK(result.csv == run.out / "sweep.csv");
  CHECK(fs::exists(run.out / "runs" / "lambda_0" / "seed_1" / "train" /
                   "checkpoint.json"));
  CHECK(fs::exists(run.out / "runs" / "lambda_0.5" / "seed_2" / "eval" /
                   "metrics.json"));

  const auto rows = lines_of(slurp(result.csv));
  REQUIRE(rows.size() == 7);  // header + 4 seed rows + 2 median rows
  CHECK(rows[0] == "setting,seed,smooth_l1,ece_z,ece_q,nll");
  CHECK(fields_of(rows[1])[0] == "0");
  CHECK(fields_of(rows[1])[1] == "1");
  CHECK(fields_of(rows[4])[0] == "0.5");
  CHECK(fields_of(rows[4])[1] == "2");
  CHECK(fields_of(rows[5])[1] == "median");
  CHECK(fields_of(rows[6])[1] == "median");

  // With two seeds the median is the midpoint of the pair, column by column.
  for (std::size_t col = 2; col < 6; ++col) {
    const double a = num(fields_of(rows[1])[col]);
    const double b = num(fields_of(rows[2])[col]);
    CHECK(num(fields_of(rows[5])[col]) == 0.5 * (a + b));
  }
}

TEST_CASE("K sweep formats settings as integers and survives a failing child") {
  SweepRun run;
  run.kind = SweepKind::Dof;
  run.values = {8, 4000};  // 4000 exceeds the train split's residual count
  run.seeds = {1};
  run.out = fresh_dir("sweep_dof");
  run.data = tiny_data();
  run.train = tiny_train("");
  run.train.loss.calibration = CalibrationKind::FcalKl;
  const SweepResult result = run_sweep(run);

  CHECK(result.failed == 1);
  const std::string errors = slurp(run.out / "errors.log");
  CHECK(errors.find("4000") != std::string::npos);

  const auto rows = lines_of(slurp(result.csv));
  REQUIRE(rows.size() == 5);  // header + 2 seed rows + 2 median rows
  const auto good = fields_of(rows[1]);
  CHECK(good[0] == "8");
  CHECK(std::isfinite(num(good[2])));
  const auto bad = fields_of(rows[2]);
  CHECK(bad[0] == "4000");
  for (std::size_t col = 2; col < 6; ++col) {
    CHECK(std::isnan(num(bad[col])));
    CHECK(std::isnan(num(fields_of(rows[4])[col])));
  }
}

TEST_CASE("gamma sweep scores the drop against a lambda-zero baseline") {
  SweepRun run;
  run.kind = SweepKind::Gamma;
  run.values = {2.0};
  run.seeds = {1};
  run.out = fresh_dir("sweep_gamma");
  run.data = tiny_data();
  run.train = tiny_train("");
  run.train.loss.calibration = CalibrationKind::FcalKl;
  run.train.loss.lambda = 0.3;
  const SweepResult result = run_sweep(run);

  CHECK(result.failed == 0);
  const fs::path child = run.out / "runs" / "gamma_2" / "seed_1";
  CHECK(fs::exists(child / "base" / "eval" / "metrics.json"));
  CHECK(fs::exists(child / "fcal" / "eval" / "metrics.json"));

  const auto rows = lines_of(slurp(result.csv));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] ==
        "setting,seed,smooth_l1,ece_z,ece_q,nll,baseline_smooth_l1,pct_drop");
  const auto f = fields_of(rows[1]);
  REQUIRE(f.size() == 8);
  const double sl1 = num(f[2]);
  const double base = num(f[6]);
  CHECK(base > 0.0);
  CHECK(num(f[7]) == doctest::Approx(100.0 * (sl1 - base) / base).epsilon(1e-12));
}

TEST_CASE("sweep output does not depend on the worker count") {
  auto runner = [&](const std::string& name, int parallel) {
    SweepRun run;
    run.kind = SweepKind::Lambda;
    run.values = {0.2, 0.7};
    run.seeds = {1, 2};
    run.out = fresh_dir(name);
    run.parallel = parallel;
    run.data = tiny_data();
    run.train = tiny_train("");
    run.train.loss.calibration = CalibrationKind::FcalKl;
    run.train.epochs = 1;
    run_sweep(run);
    return slurp(run.out / "sweep.csv");
  };
  CHECK(runner("sweep_serial", 1) == runner("sweep_pooled", 3));
}

TEST_CASE("sweep validation rejects malformed grids") {
  SweepRun base;
  base.kind = SweepKind::Lambda;
  base.values = {0.5};
  base.out = scratch_dir() / "sweep_invalid";
  base.data = tiny_data();
  base.train = tiny_train("");
  base.train.loss.calibration = CalibrationKind::FcalKl;

  auto broken = [&](auto mutate) {
    SweepRun run = base;
    mutate(run);
    return run_sweep(run);
  };
  CHECK_THROWS_AS(broken([](SweepRun& r) { r.out.clear(); }), ConfigError);
  CHECK_THROWS_AS(broken([](SweepRun& r) { r.values.clear(); }), ConfigError);
  CHECK_THROWS_AS(broken([](SweepRun& r) { r.seeds.clear(); }), ConfigError);
  CHECK_THROWS_AS(broken([](SweepRun& r) { r.parallel = 0; }), ConfigError);
  CHECK_THROWS_AS(broken([](SweepRun& r) { r.values = {1.5}; }), ConfigError);
  CHECK_THROWS_AS(broken([](SweepRun& r) {
                    r.kind = SweepKind::Dof;
                    r.values = {3.5};
                  }),
                  ConfigError);
  CHECK_THROWS_AS(broken([](SweepRun& r) {
                    r.kind = SweepKind::Gamma;
                    r.values = {-1.0};
                  }),
                  ConfigError);
  // K and gamma sweeps study the calibration term, so they need one.
  CHECK_THROWS_AS(broken([](SweepRun& r) {
                    r.kind = SweepKind::Dof;
                    r.values = {8};
                    r.train.loss.calibration = CalibrationKind::None;
                  }),
                  ConfigError);
  // And a lambda sweep over a pure NLL objective would weigh nothing.
  CHECK_THROWS_AS(broken([](SweepRun& r) {
                    r.train.loss.calibration = CalibrationKind::None;
                  }),
                  ConfigError);
}

TEST_CASE("report renders a digest of whatever artifacts are present") {
  GenDataRun gen;
  gen.data = tiny_data();
  gen.seed = 7;
  gen.out = fresh_dir("report_gen");
  const SynthDataset data = run_gen_data(gen);
  const std::string gen_report = render_report(gen.out);
  CHECK(gen_report.find("config: ") != std::string::npos);
  CHECK(gen_report.find("dataset: 200 samples, noise heteroscedastic, seed 7") !=
        std::string::npos);

  TrainRun train = tiny_train(fresh_dir("report_train"));
  train.epochs = 3;
  run_training(train, data);
  const std::string train_report = render_report(train.out);
  CHECK(train_report.find("training: 4 logged rows") != std::string::npos);
  CHECK(train_report.find("first (epoch,emp_risk,fcal_loss,combined): 0,") !=
        std::string::npos);
  CHECK(train_report.find("last  (epoch,emp_risk,fcal_loss,combined): 3,") !=
        std::string::npos);

  EvalRun eval;
  eval.oracle = true;
  eval.out = fresh_dir("report_eval");
  eval.metrics.dof = 8;
  run_eval(eval, data);
  const std::string eval_report = render_report(eval.out);
  CHECK(eval_report.find("metrics:") != std::string::npos);
  CHECK(eval_report.find("consistency@0.9 = ") != std::string::npos);
  CHECK(eval_report.find("ece_z = ") != std::string::npos);
}

TEST_CASE("report summarizes sweeps by their median rows") {
  SweepRun run;
  run.kind = SweepKind::Lambda;
  run.values = {0.0, 0.5};
  run.seeds = {1, 2};
  run.out = fresh_dir("report_sweep");
  run.data = tiny_data();
  run.train = tiny_train("");
  run.train.loss.calibration = CalibrationKind::FcalKl;
  run.train.epochs = 1;
  run_sweep(run);

  const std::string report = render_report(run.out);
  CHECK(report.find("sweep medians (setting,seed,") != std::string::npos);
  std::size_t medians = 0;
  for (const std::string& line : lines_of(report)) {
    if (line.find(",median,") != std::string::npos) ++medians;
  }
  CHECK(medians == run.values.size());
}

TEST_CASE("report refuses directories without run artifacts") {
  CHECK_THROWS_AS(render_report(scratch_dir() / "no_such_dir"), IoError);
  const fs::path empty = fresh_dir("report_empty");
  CHECK_THROWS_AS(render_report(empty), IoError);
}

TEST_SUITE_END();
