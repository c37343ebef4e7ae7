#pragma once

#include <span>
#include <vector>

#include "fcal/autodiff.hpp"

namespace fcal {

/// Post-hoc multiplicative scale on all predicted sigmas, fit on held-out
/// data. t = 1 is the identity; means are never touched.
struct TemperatureModel {
  double t = 1.0;
  double val_nll_before = 0.0;
  double val_nll_after = 0.0;
};

/// Choose t > 0 minimizing the mean Gaussian NLL of (mu, t * sigma) on the
/// validation tuples, by golden-section search over log t in
/// [log 1e-3, log 1e3] to |delta t| < 1e-6. For Gaussian NLL the optimum has
/// the closed form t*^2 = mean(((y - mu)/sigma)^2), which tests use as an
/// independent cross-check.
TemperatureModel fit_temperature(std::span<const double> mu,
                                 std::span<const double> sigma,
                                 std::span<const double> y);

/// Predictive distribution families whose CDFs the PIT canonicalization can
/// invert through.
enum class PredictiveFamily { Gaussian, Laplace };

/// Lower/upper clamp applied to CDF values before the inverse-normal map so
/// the result stays finite.
inline constexpr double kPitCdfClamp = 1e-9;

/// Map one observation through its predictive CDF and then through the
/// inverse standard-normal CDF: z = Phi^{-1}(S(y)). Under a calibrated model
/// the outputs are standard normal regardless of the family. `loc`/`scale`
/// are the family's location and scale (mean/sd for Gaussian, median/b for
/// Laplace).
double pit_z(double y, double loc, double scale, PredictiveFamily family);

/// Vectorized pit_z over per-sample parameters.
std::vector<double> pit_canonicalize(std::span<const double> y,
                                     std::span<const double> loc,
                                     std::span<const double> scale,
                                     PredictiveFamily family);

/// Differentiable pit_z for training through non-Gaussian heads.
///
/// The Gaussian family reduces algebraically to (y - loc) / scale, which is
/// what gets recorded (identical to the double path up to the inverse-CDF
/// round-trip error). The Laplace family records the actual composition:
/// its closed-form CDF followed by a rational approximation of the inverse
/// normal CDF (~1e-9 accurate, plenty for gradients). Clamped CDF values
/// record as constants, so their gradient is zero, matching the flat clamp.
Var pit_z(const Var& loc, const Var& scale, double y, PredictiveFamily family);

}  // namespace fcal
