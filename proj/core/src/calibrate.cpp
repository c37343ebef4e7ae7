#include "fcal/calibrate.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fcal/distmath.hpp"
#include "inv_cdf_coeffs.h"

namespace fcal {

TemperatureModel fit_temperature(std::span<const double> mu,
                                 std::span<const double> sigma,
                                 std::span<const double> y) {
  if (mu.empty() || mu.size() != sigma.size() || mu.size() != y.size()) {
    throw std::invalid_argument(
        "fit_temperature: validation tuples empty or mismatched");
  }
  // NLL(t) = mean(z^2)/(2 t^2) + log t + mean(log sigma^2)/2, so the search
  // only needs these two batch statistics.
  double sum_z2 = 0.0;
  double sum_log_var = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0)) {
      throw std::domain_error("fit_temperature: sigma must be positive");
    }
    double z = (y[i] - mu[i]) / sigma[i];
    sum_z2 += z * z;
    sum_log_var += std::log(sigma[i] * sigma[i]);
  }
  const double a_stat = 0.5 * sum_z2 / static_cast<double>(mu.size());
  const double c_stat = 0.5 * sum_log_var / static_cast<double>(mu.size());
  auto nll_at = [&](double log_t) {
    return a_stat * std::exp(-2.0 * log_t) + log_t + c_stat;
  };

  // Golden-section over log t; the bracket spans [1e-3, 1e3].
  const double invphi = 0.6180339887498949;
  double lo = std::log(1e-3);
  double hi = std::log(1e3);
  double x1 = hi - invphi * (hi - lo);
  double x2 = lo + invphi * (hi - lo);
  double f1 = nll_at(x1);
  double f2 = nll_at(x2);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = nll_at(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = nll_at(x2);
    }
  }
  TemperatureModel fit;
  fit.t = std::exp(0.5 * (lo + hi));
  fit.val_nll_before = nll_at(0.0);
  fit.val_nll_after = nll_at(std::log(fit.t));
  return fit;
}

namespace {

double clamp_cdf(double p) {
  if (p < kPitCdfClamp) return kPitCdfClamp;
  if (p > 1.0 - kPitCdfClamp) return 1.0 - kPitCdfClamp;
  return p;
}

// Taped Acklam approximation. Region selection happens at record time from
// the forward value, like every other piecewise primitive on the tape.
Var inv_normal_cdf_on_tape(const Var& p) {
  const double* a = detail::kAcklamA;
  const double* b = detail::kAcklamB;
  const double* c = detail::kAcklamC;
  const double* d = detail::kAcklamD;
  const double p_low = detail::kAcklamPLow;
  double pv = p.value();
  if (pv < p_low) {
    Var q = sqrt(-2.0 * log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (pv <= 1.0 - p_low) {
    Var q = p - 0.5;
    Var r = square(q);
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
            a[5]) *
           q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  Var q = sqrt(-2.0 * log(1.0 - p));
  return -((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0));
}

}  // namespace

double pit_z(double y, double loc, double scale, PredictiveFamily family) {
  if (!(scale > 0.0)) {
    throw std::domain_error("pit_z: scale must be positive");
  }
  double u = 0.0;
  switch (family) {
    case PredictiveFamily::Gaussian:
      u = std_normal_cdf((y - loc) / scale);
      break;
    case PredictiveFamily::Laplace:
      u = laplace_cdf(y, loc, scale);
      break;
  }
  return std_normal_inv_cdf(clamp_cdf(u));
}

std::vector<double> pit_canonicalize(std::span<const double> y,
                                     std::span<const double> loc,
                                     std::span<const double> scale,
                                     PredictiveFamily family) {
  if (y.size() != loc.size() || y.size() != scale.size()) {
    throw std::invalid_argument("pit_canonicalize: size mismatch");
  }
  std::vector<double> z(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    z[i] = pit_z(y[i], loc[i], scale[i], family);
  }
  return z;
}

Var pit_z(const Var& loc, const Var& scale, double y, PredictiveFamily family) {
  if (!(scale.value() > 0.0)) {
    throw std::domain_error("pit_z: scale must be positive");
  }
  if (family == PredictiveFamily::Gaussian) {
    // Phi^{-1}(Phi((y - loc)/scale)) collapses to the standardized residual;
    // record that directly instead of the round trip.
    return (y - loc) / scale;
  }
  Tape& tape = *loc.tape();
  Var t = (y - loc) / scale;
  Var u = t.value() < 0.0 ? 0.5 * exp(t) : 1.0 - 0.5 * exp(-t);
  if (u.value() < kPitCdfClamp) {
    u = tape.constant(kPitCdfClamp);
  } else if (u.value() > 1.0 - kPitCdfClamp) {
    u = tape.constant(1.0 - kPitCdfClamp);
  }
  return inv_normal_cdf_on_tape(u);
}

}  // namespace fcal
