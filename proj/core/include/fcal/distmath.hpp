#pragma once

#include <span>

#include "fcal/rng.hpp"

namespace fcal {

/// Standard normal CDF, accurate to full double precision via erfc.
/// Throws std::domain_error for non-finite input.
double std_normal_cdf(double x);

/// Inverse standard normal CDF on the open interval (0, 1).
///
/// Uses Acklam's rational approximation polished with one Halley step of
/// erfc-based Newton refinement, giving ~1e-15 relative error. Throws
/// std::domain_error outside (0, 1).
double std_normal_inv_cdf(double p);

/// CDF of the Laplace distribution with location `loc` and scale `scale > 0`.
double laplace_cdf(double x, double loc, double scale);

/// Regularized lower incomplete gamma P(a, x), the workhorse behind the
/// chi-squared CDF. a > 0, x >= 0.
double regularized_gamma_p(double a, double x);

/// Chi-squared CDF with `dof` degrees of freedom (dof > 0). Returns 0 for
/// x <= 0.
double chi_squared_cdf(double x, double dof);

/// Gamma(shape, scale) sampler (Marsaglia-Tsang squeeze, with the power
/// boost for shape < 1). shape > 0, scale > 0.
double sample_gamma(Rng& rng, double shape, double scale);

/// Laplace(loc, scale) sampler via inverse-CDF on an open-interval uniform.
double sample_laplace(Rng& rng, double loc, double scale);

/// Chi-squared sampler with `dof` degrees of freedom.
double sample_chi_squared(Rng& rng, double dof);

}  // namespace fcal
