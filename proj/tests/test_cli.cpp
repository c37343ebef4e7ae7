// End-to-end checks of the fcal binary: exit codes, stdout wording, artifact
// bytes. The binary path arrives in the FCAL_CLI environment variable.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string output;  // stdout and stderr, interleaved
};

std::string cli_binary() {
  const char* bin = std::getenv("FCAL_CLI");
  REQUIRE_MESSAGE(bin != nullptr,
                  "set FCAL_CLI to the fcal binary before running");
  return bin;
}

CliResult run_cli(const std::string& args) {
  const std::string cmd = "\"" + cli_binary() + "\" " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult result;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) {
    result.output.append(buf, n);
  }
  const int status = pclose(pipe);
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "fcal_cli_test" / name;
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

bool contains(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

/// Tiny dataset shared by the pipeline cases below.
std::string gen_args(const fs::path& out, int seed = 5) {
  return "gen-data --out \"" + out.string() + "\" --seed " +
         std::to_string(seed) + " --n 200 --distractors 0";
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("help and usage errors use the documented exit codes") {
  CHECK(run_cli("--help").code == 0);
  const CliResult sub_help = run_cli("gen-data --help");
  CHECK(sub_help.code == 0);
  CHECK(contains(sub_help.output, "--sigma-min"));

  CHECK(run_cli("").code == 2);             // a subcommand is required
  CHECK(run_cli("frobnicate").code == 2);   // and it must be a known one
  CHECK(run_cli("report").code == 2);       // report needs its directory

  const CliResult bad_gamma = run_cli("gen-data --gamma 0 --out /tmp/x");
  CHECK(bad_gamma.code == 2);
  CHECK(contains(bad_gamma.output, "gamma"));

  const CliResult bad_lambda = run_cli("train --lambda 1.5");
  CHECK(bad_lambda.code == 2);
  CHECK(contains(bad_lambda.output, "lambda"));
}

TEST_CASE("config errors exit 2 and name the offending value") {
  const CliResult bad_loss = run_cli("train --loss bogus --data x --out y");
  CHECK(bad_loss.code == 2);
  CHECK(contains(bad_loss.output, "--loss must be"));
  CHECK(contains(bad_loss.output, "bogus"));

  const CliResult bad_split =
      run_cli("eval --split nowhere --oracle --data x --out y");
  CHECK(bad_split.code == 2);
  CHECK(contains(bad_split.output, "--split must be"));

  const CliResult bad_over = run_cli("sweep --over sigma --values 1 --out y");
  CHECK(bad_over.code == 2);
  CHECK(contains(bad_over.output, "--over must be"));

  const CliResult no_out = run_cli("gen-data --n 200");
  CHECK(no_out.code == 2);
  CHECK(contains(no_out.output, "--out"));
}

TEST_CASE("runtime failures exit 1") {
  const fs::path out = fresh_dir("runtime_out");
  const CliResult missing = run_cli(
      "train --data /nonexistent/dataset.json --out \"" + out.string() + "\"");
  CHECK(missing.code == 1);
  CHECK(contains(missing.output, "error: "));

  const fs::path data = fresh_dir("runtime_data");
  REQUIRE(run_cli(gen_args(data)).code == 0);
  const CliResult diverged = run_cli(
      "train --data \"" + (data / "dataset.json").string() + "\" --out \"" +
      out.string() +
      "\" --hidden 4 --loss nll --epochs 50 --lr 1e18");
  CHECK(diverged.code == 1);
  CHECK(contains(diverged.output, "epoch"));
}

TEST_CASE("the full pipeline runs and its artifacts are reproducible") {
  const fs::path data_a = fresh_dir("pipe_data_a");
  const fs::path data_b = fresh_dir("pipe_data_b");
  const CliResult gen = run_cli(gen_args(data_a));
  CHECK(gen.code == 0);
  CHECK(contains(gen.output, "wrote"));
  CHECK(contains(gen.output, "200 samples, noise hetero"));
  REQUIRE(run_cli(gen_args(data_b)).code == 0);
  CHECK(slurp(data_a / "dataset.json") == slurp(data_b / "dataset.json"));
  CHECK(slurp(data_a / "dataset.csv") == slurp(data_b / "dataset.csv"));

  const std::string manifest = (data_a / "dataset.json").string();
  const std::string train_flags = " --hidden 4 --loss nll --epochs 2 --lr 1e-2";
  const fs::path train_a = fresh_dir("pipe_train_a");
  const fs::path train_b = fresh_dir("pipe_train_b");
  const CliResult trained = run_cli("train --data \"" + manifest +
                                    "\" --out \"" + train_a.string() + "\"" +
                                    train_flags);
  CHECK(trained.code == 0);
  CHECK(contains(trained.output, "final emp_risk"));
  REQUIRE(run_cli("train --data \"" + manifest + "\" --out \"" +
                  train_b.string() + "\"" + train_flags)
              .code == 0);
  CHECK(slurp(train_a / "checkpoint.json") ==
        slurp(train_b / "checkpoint.json"));
  CHECK(slurp(train_a / "training_log.csv") ==
        slurp(train_b / "training_log.csv"));

  const fs::path eval_a = fresh_dir("pipe_eval_a");
  const fs::path eval_b = fresh_dir("pipe_eval_b");
  const std::string eval_flags = " --dof 8 --constraints 64";
  const CliResult scored = run_cli(
      "eval --data \"" + manifest + "\" --checkpoint \"" +
      (train_a / "checkpoint.json").string() + "\" --out \"" +
      eval_a.string() + "\"" + eval_flags);
  CHECK(scored.code == 0);
  CHECK(contains(scored.output, "ece_z"));
  REQUIRE(run_cli("eval --data \"" + manifest + "\" --checkpoint \"" +
                  (train_a / "checkpoint.json").string() + "\" --out \"" +
                  eval_b.string() + "\"" + eval_flags)
              .code == 0);
  CHECK(slurp(eval_a / "metrics.json") == slurp(eval_b / "metrics.json"));
  CHECK(slurp(eval_a / "reliability_z.csv") ==
        slurp(eval_b / "reliability_z.csv"));

  const CliResult report = run_cli("report \"" + eval_a.string() + "\"");
  CHECK(report.code == 0);
  CHECK(contains(report.output, "metrics:"));
  CHECK(contains(report.output, "ece_z = "));
  CHECK(run_cli("report \"" + fresh_dir("report_empty").string() + "\"").code ==
        1);
}

TEST_CASE("a config echo reproduces the run and flags still win") {
  const fs::path data_a = fresh_dir("cfg_data_a");
  REQUIRE(run_cli(gen_args(data_a, 5)).code == 0);

  // Feeding the echo back reproduces the dataset byte for byte.
  const fs::path data_b = fresh_dir("cfg_data_b");
  REQUIRE(run_cli("gen-data --config \"" + (data_a / "config.json").string() +
                  "\" --out \"" + data_b.string() + "\"")
              .code == 0);
  CHECK(slurp(data_a / "dataset.json") == slurp(data_b / "dataset.json"));

  // A flag on top of the config overrides the echoed value.
  const fs::path data_c = fresh_dir("cfg_data_c");
  REQUIRE(run_cli("gen-data --config \"" + (data_a / "config.json").string() +
                  "\" --out \"" + data_c.string() + "\" --seed 6")
              .code == 0);
  CHECK(slurp(data_a / "dataset.json") != slurp(data_c / "dataset.json"));

  // Same contract for training runs.
  const std::string manifest = (data_a / "dataset.json").string();
  const fs::path train_a = fresh_dir("cfg_train_a");
  REQUIRE(run_cli("train --data \"" + manifest + "\" --out \"" +
                  train_a.string() +
                  "\" --hidden 4 --loss fcal-kl --lambda 0.3 --dof 8 "
                  "--constraints 4 --epochs 2 --lr 1e-2")
              .code == 0);
  const fs::path train_b = fresh_dir("cfg_train_b");
  REQUIRE(run_cli("train --config \"" + (train_a / "config.json").string() +
                  "\" --out \"" + train_b.string() + "\"")
              .code == 0);
  CHECK(slurp(train_a / "checkpoint.json") ==
        slurp(train_b / "checkpoint.json"));

  const CliResult bad_config = run_cli("gen-data --config /nonexistent --out x");
  CHECK(bad_config.code == 2);
}

TEST_CASE("sweep reports partial failure with exit 1") {
  const fs::path ok_out = fresh_dir("sweep_ok");
  const CliResult ok = run_cli(
      "sweep --over K --values 8 --seeds 1 --out \"" + ok_out.string() +
      "\" --n 200 --distractors 0 --hidden 4 --loss fcal-kl --lambda 0.3 "
      "--constraints 4 --epochs 1 --lr 1e-2");
  CHECK(ok.code == 0);
  CHECK(contains(ok.output, "sweep.csv"));
  CHECK(fs::exists(ok_out / "sweep.csv"));

  const fs::path mixed_out = fresh_dir("sweep_mixed");
  const CliResult mixed = run_cli(
      "sweep --over K --values 8 4000 --seeds 1 --out \"" +
      mixed_out.string() +
      "\" --n 200 --distractors 0 --hidden 4 --loss fcal-kl --lambda 0.3 "
      "--constraints 4 --epochs 1 --lr 1e-2");
  CHECK(mixed.code == 1);
  CHECK(contains(mixed.output, "child run(s) failed"));
  CHECK(fs::exists(mixed_out / "errors.log"));
  CHECK(fs::exists(mixed_out / "sweep.csv"));
}

TEST_SUITE_END();
