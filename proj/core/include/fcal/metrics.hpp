#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fcal/model.hpp"

namespace fcal {

/// Seed used for the evaluation-time hyper-constraint draw unless a caller
/// overrides it. Published so reported q-space metrics are reproducible.
inline constexpr std::uint64_t kDefaultEvalSeed = 271828;

using TargetCdf = std::function<double(double)>;

/// Calibration error over `bins` equal-probability bins of the target
/// distribution: samples are mapped through `target_cdf`, binned uniformly
/// on [0, 1] (values on an edge go to the upper bin), and each bin
/// contributes its share times its deviation from the ideal 1/bins:
/// sum_s (n_s/N) * |1/S - n_s/N|.
double ece(std::span<const double> samples, const TargetCdf& target_cdf,
           int bins);

/// Max over bins of |1/S - n_s/N| under the same binning as ece.
double mce(std::span<const double> samples, const TargetCdf& target_cdf,
           int bins);

/// One point per bin edge s/S of a reliability diagram.
struct ReliabilityPoint {
  int bin_index = 0;          // 1-based; last index equals the bin count
  double expected_cum = 0.0;  // s / S
  double empirical_cum = 0.0; // share of samples with CDF value < s / S
                              // (edge values belong to the upper bin, same
                              // rule as the ece/mce binning)
};

/// Cumulative empirical frequency at every bin edge; the diagonal
/// (expected == empirical) is perfect calibration. The last point's
/// empirical value is exactly 1.
std::vector<ReliabilityPoint> reliability_curve(std::span<const double> samples,
                                                const TargetCdf& target_cdf,
                                                int bins);

struct DivergencePair {
  double kld_q = 0.0;
  double w_dist_q = 0.0;
};

/// Fit a Gaussian to the hyper-constraint values and measure both
/// closed-form divergences from the CLT target N(dof, 2*dof). Both are
/// computed on standardized values (q - dof)/sqrt(2*dof) against N(0, 1):
/// KL is invariant under that affine map, and the Wasserstein distance
/// becomes scale-free (equal to the raw distance divided by 2*dof), which
/// keeps one threshold meaningful across dof. Throws through
/// kl_gaussians when the values are degenerate (zero variance).
DivergencePair eval_divergences(std::span<const double> q, int dof);

/// Fraction of residuals inside the central `confidence` interval of the
/// standard normal: |z| <= Phi^{-1}((1 + c)/2). c must lie in (0, 1).
double consistency_rate(std::span<const double> z, double confidence);

struct MetricsConfig {
  int bins = 10;
  int dof = 64;           // K for the q-space metrics
  int constraints = 512;  // H for the q-space metrics
  std::uint64_t eval_seed = kDefaultEvalSeed;
  double smooth_l1_delta = 1.0;
  std::vector<double> confidences = {0.7, 0.8, 0.9, 0.95};
};

struct MetricsReport {
  std::size_t sample_count = 0;
  int component_count = 0;
  int bins = 0;
  int dof = 0;
  int constraints = 0;
  std::uint64_t eval_seed = 0;

  double nll = 0.0;
  double ece_z = 0.0;
  double mce_z = 0.0;
  double ece_q = 0.0;
  double mce_q = 0.0;
  double kld_q = 0.0;
  double w_dist_q = 0.0;
  double smooth_l1 = 0.0;  // mu versus the (noisy) labels
  std::optional<double> smooth_l1_clean;  // versus noise-free labels if known
  std::optional<double> temperature;      // set when sigmas were rescaled
  std::optional<double> val_nll;          // NLL on the validation split, with
                                          // the same temperature applied

  std::vector<std::pair<double, double>> consistency;  // (confidence, rate)
  std::vector<ReliabilityPoint> reliability_z;
  std::vector<ReliabilityPoint> reliability_q;
};

/// Evaluate prediction arrays (count * components, flattened row-major)
/// against labels. z-space metrics come from (y - mu)/sigma against N(0,1);
/// q-space metrics aggregate a seeded hyper-constraint draw against the
/// chi-squared CDF. Pass an empty y_clean when noise-free labels are
/// unknown.
MetricsReport evaluate_params(std::span<const double> mu,
                              std::span<const double> sigma,
                              std::span<const double> y,
                              std::span<const double> y_clean,
                              std::size_t count, int components,
                              const MetricsConfig& config);

/// Convenience wrapper: run the model on features, then evaluate_params.
MetricsReport evaluate(const MlpRegressor& model,
                       std::span<const double> x_flat,
                       std::span<const double> y_flat,
                       std::span<const double> y_clean_flat, std::size_t count,
                       const MetricsConfig& config);

/// Deterministic JSON rendering: keys sorted, every float rounded to nine
/// significant digits. Reliability curves are not included; they are
/// emitted as CSV next to the report.
std::string to_json_string(const MetricsReport& report);

/// CSV with header bin_index,expected_cum,empirical_cum.
std::string reliability_csv(std::span<const ReliabilityPoint> curve);

}  // namespace fcal
