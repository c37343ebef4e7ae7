#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fcal/autodiff.hpp"
#include "fcal/rng.hpp"

namespace fcal {

/// (mean, variance) pair describing a univariate Gaussian, either given in
/// closed form or fitted to a sample.
struct GaussianMoments {
  double mean = 0.0;
  double variance = 1.0;
};

/// Arithmetic mean and unbiased (n-1) variance; needs at least two entries.
GaussianMoments empirical_gaussian_stats(std::span<const double> xs);

/// KL(p || q) between univariate Gaussians:
/// 0.5 * log(var_q / var_p) + (var_p + (mean_p - mean_q)^2) / (2 * var_q) - 0.5.
/// Both variances must be positive.
double kl_gaussians(const GaussianMoments& p, const GaussianMoments& q);

/// Squared 2-Wasserstein distance between univariate Gaussians:
/// (mean_p - mean_q)^2 + (sd_p - sd_q)^2. Symmetric; variances nonnegative.
double wass_gaussians(const GaussianMoments& p, const GaussianMoments& q);

/// Which per-sample fit term the training objective uses.
enum class EmpiricalRisk { SmoothL1, Nll };

/// Which calibration term (if any) is blended into the objective.
///  - FcalKl / FcalWass: distribution-matching penalty on aggregated
///    squared residuals against the chi-squared CLT target N(dof, 2*dof).
///  - PerSampleVariance: the classic pointwise ((y-mu)^2 - sigma^2)^2
///    penalty, kept as a baseline.
enum class CalibrationKind { None, FcalKl, FcalWass, PerSampleVariance };

struct LossSpec {
  double lambda = 0.5;  // weight on the calibration term, in [0, 1]
  EmpiricalRisk empirical = EmpiricalRisk::Nll;
  CalibrationKind calibration = CalibrationKind::FcalKl;
  int dof = 64;          // residuals aggregated per hyper-constraint (K)
  int constraints = 64;  // hyper-constraints per batch (H)
  double smooth_l1_delta = 1.0;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

/// Frozen choice of which residuals feed which hyper-constraint: `count`
/// rows of `dof` indices into a residual vector. Within a row indices are
/// distinct (drawn without replacement); across rows residuals may be
/// reused. Freezing the draw separately from the reduction keeps gradient
/// checks and permutation properties deterministic.
struct HyperConstraintAssignment {
  int dof = 0;
  int count = 0;
  std::vector<std::int32_t> indices;  // count x dof, row-major
};

/// Sample an assignment over residual indices [0, n). Requires n >= dof
/// and count >= 2 (a single constraint has no fittable variance).
HyperConstraintAssignment draw_hyperconstraint_assignment(std::size_t n,
                                                          int dof, int count,
                                                          Rng& rng);

/// Aggregated residuals plus the index draw that produced them.
struct HyperConstraintSet {
  std::vector<double> q;  // one entry per constraint, each >= 0
  HyperConstraintAssignment assignment;
};

// ---- double flavors (evaluation, logging) ----

/// Mean smooth-L1 (Huber) distance: e^2/(2*delta) for |e| <= delta, else
/// |e| - delta/2.
double smooth_l1(std::span<const double> pred, std::span<const double> target,
                 double delta);

/// Mean Gaussian negative log-likelihood up to the additive constant:
/// (1/N) sum 0.5 * ((y - mu)^2 / sigma^2 + log sigma^2).
double nll_loss(std::span<const double> mu, std::span<const double> sigma,
                std::span<const double> y);

/// z_i = (y_i - mu_i) / sigma_i, one per scalar target component.
std::vector<double> residuals(std::span<const double> mu,
                              std::span<const double> sigma,
                              std::span<const double> y);

/// q_r = sum of z^2 over the r-th row of a frozen assignment.
std::vector<double> build_hyperconstraints(std::span<const double> z,
                                           const HyperConstraintAssignment& a);

/// Draw-and-aggregate convenience: sample an assignment from `rng`, then
/// reduce. Requires z.size() >= dof and count >= 2.
HyperConstraintSet build_hyperconstraints(std::span<const double> z, int dof,
                                          int count, Rng& rng);

/// Distribution-matching penalty: fit a Gaussian to the hyper-constraint
/// values and measure its divergence from N(dof, 2*dof), either as
/// KL(empirical || target) or as squared 2-Wasserstein distance. The
/// Wasserstein variant is evaluated on standardized values (q - dof) /
/// sqrt(2*dof), i.e. the raw distance divided by 2*dof; KL is invariant
/// under that affine map, so both divergences live on one scale and a
/// single mixing weight works for either.
double fcal_loss(std::span<const double> z, const HyperConstraintAssignment& a,
                 CalibrationKind kind);

/// Full pipeline on predictions: residuals, a fresh assignment from `rng`,
/// then the divergence chosen by `spec.calibration`.
double fcal_loss(std::span<const double> mu, std::span<const double> sigma,
                 std::span<const double> y, const LossSpec& spec, Rng& rng);

/// Mean of ((y - mu)^2 - sigma^2)^2.
double per_sample_calibration_loss(std::span<const double> mu,
                                   std::span<const double> sigma,
                                   std::span<const double> y);

/// Exact convex combination (1 - lambda) * emp_risk + lambda * fcal.
/// Throws ConfigError when lambda is outside [0, 1].
double combined_loss(double emp_risk, double fcal, double lambda);

double empirical_risk(std::span<const double> mu, std::span<const double> sigma,
                      std::span<const double> y, const LossSpec& spec);

/// The trained objective: empirical risk blended with the calibration term
/// selected by `spec`. With CalibrationKind::None the empirical risk is
/// returned as-is (no lambda blending against a missing term). `assignment`
/// is required for the fcal kinds and ignored otherwise.
double training_objective(std::span<const double> mu,
                          std::span<const double> sigma,
                          std::span<const double> y, const LossSpec& spec,
                          const HyperConstraintAssignment* assignment);

// ---- Var flavors (training; mirror the double path) ----

Var smooth_l1(std::span<const Var> pred, std::span<const double> target,
              double delta);
Var nll_loss(std::span<const Var> mu, std::span<const Var> sigma,
             std::span<const double> y);
std::vector<Var> residuals(std::span<const Var> mu, std::span<const Var> sigma,
                           std::span<const double> y);
std::vector<Var> build_hyperconstraints(std::span<const Var> z,
                                        const HyperConstraintAssignment& a);
Var fcal_loss(std::span<const Var> z, const HyperConstraintAssignment& a,
              CalibrationKind kind);
Var per_sample_calibration_loss(std::span<const Var> mu,
                                std::span<const Var> sigma,
                                std::span<const double> y);
Var combined_loss(const Var& emp_risk, const Var& fcal, double lambda);
Var empirical_risk(std::span<const Var> mu, std::span<const Var> sigma,
                   std::span<const double> y, const LossSpec& spec);
Var training_objective(std::span<const Var> mu, std::span<const Var> sigma,
                       std::span<const double> y, const LossSpec& spec,
                       const HyperConstraintAssignment* assignment);

}  // namespace fcal
