#include "fcal/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "fcal/errors.hpp"

namespace fcal {

namespace {

void check_equal_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": size mismatch (" +
                                std::to_string(a) + " vs " +
                                std::to_string(b) + ")");
  }
}

void check_assignment(std::size_t n, const HyperConstraintAssignment& a) {
  if (a.dof < 1 || a.count < 1 ||
      a.indices.size() !=
          static_cast<std::size_t>(a.dof) * static_cast<std::size_t>(a.count)) {
    throw std::invalid_argument("hyper-constraint assignment is malformed");
  }
  for (std::int32_t idx : a.indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= n) {
      throw std::invalid_argument(
          "hyper-constraint assignment indexes outside the residual vector");
    }
  }
}

// Gaussian the aggregated residuals are matched against: by the CLT a sum of
// `dof` squared standard normals is approximately N(dof, 2*dof). The
// approximation needs moderately large dof; the default of 64 is comfortably
// past the point where it holds.
GaussianMoments clt_target(int dof) {
  double k = static_cast<double>(dof);
  return {k, 2.0 * k};
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("loss: lambda must lie in [0, 1], got " +
                      std::to_string(lambda));
  }
}

}  // namespace

GaussianMoments empirical_gaussian_stats(std::span<const double> xs) {
  if (xs.size() < 2) {
    throw std::invalid_argument(
        "empirical_gaussian_stats: need at least two samples, got " +
        std::to_string(xs.size()));
  }
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) {
    double d = x - mean;
    ss += d * d;
  }
  return {mean, ss / static_cast<double>(xs.size() - 1)};
}

double kl_gaussians(const GaussianMoments& p, const GaussianMoments& q) {
  if (!(p.variance > 0.0) || !(q.variance > 0.0)) {
    throw std::domain_error("kl_gaussians: variances must be positive");
  }
  double dm = p.mean - q.mean;
  return 0.5 * std::log(q.variance / p.variance) +
         (p.variance + dm * dm) / (2.0 * q.variance) - 0.5;
}

double wass_gaussians(const GaussianMoments& p, const GaussianMoments& q) {
  if (p.variance < 0.0 || q.variance < 0.0) {
    throw std::domain_error("wass_gaussians: variances must be nonnegative");
  }
  double dm = p.mean - q.mean;
  double ds = std::sqrt(p.variance) - std::sqrt(q.variance);
  return dm * dm + ds * ds;
}

void LossSpec::validate() const {
  check_lambda(lambda);
  if (!(smooth_l1_delta > 0.0)) {
    throw ConfigError("loss: smooth-l1 delta must be positive");
  }
  if (calibration == CalibrationKind::FcalKl ||
      calibration == CalibrationKind::FcalWass) {
    if (dof < 1) {
      throw ConfigError(
          "loss: dof (residuals per hyper-constraint) must be >= 1");
    }
    if (constraints < 2) {
      throw ConfigError(
          "loss: need at least 2 hyper-constraints to fit their variance");
    }
  }
}

HyperConstraintAssignment draw_hyperconstraint_assignment(std::size_t n,
                                                          int dof, int count,
                                                          Rng& rng) {
  if (dof < 1) {
    throw std::invalid_argument(
        "draw_hyperconstraint_assignment: dof must be positive");
  }
  if (count < 2) {
    throw std::invalid_argument(
        "draw_hyperconstraint_assignment: need at least 2 constraints, got " +
        std::to_string(count));
  }
  if (n < static_cast<std::size_t>(dof)) {
    throw std::invalid_argument(
        "draw_hyperconstraint_assignment: need at least dof residuals (" +
        std::to_string(dof) + "), got " + std::to_string(n));
  }
  HyperConstraintAssignment a;
  a.dof = dof;
  a.count = count;
  a.indices.reserve(static_cast<std::size_t>(dof) *
                    static_cast<std::size_t>(count));
  // Rejection-sample `dof` distinct indices per row; rows are independent,
  // so a residual may serve several constraints but appears at most once
  // within any one of them.
  std::unordered_set<std::int32_t> seen;
  seen.reserve(static_cast<std::size_t>(dof) * 2);
  for (int r = 0; r < count; ++r) {
    seen.clear();
    while (seen.size() < static_cast<std::size_t>(dof)) {
      auto idx = static_cast<std::int32_t>(rng.below(n));
      if (seen.insert(idx).second) a.indices.push_back(idx);
    }
  }
  return a;
}

// ---- double flavors ----

double smooth_l1(std::span<const double> pred, std::span<const double> target,
                 double delta) {
  check_equal_sizes(pred.size(), target.size(), "smooth_l1");
  if (pred.empty()) throw std::invalid_argument("smooth_l1: empty input");
  if (!(delta > 0.0)) {
    throw std::invalid_argument("smooth_l1: delta must be positive");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double e = pred[i] - target[i];
    double ae = std::fabs(e);
    acc += ae <= delta ? e * e / (2.0 * delta) : ae - 0.5 * delta;
  }
  return acc / static_cast<double>(pred.size());
}

double nll_loss(std::span<const double> mu, std::span<const double> sigma,
                std::span<const double> y) {
  check_equal_sizes(mu.size(), sigma.size(), "nll_loss");
  check_equal_sizes(mu.size(), y.size(), "nll_loss");
  if (mu.empty()) throw std::invalid_argument("nll_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0)) {
      throw std::domain_error("nll_loss: sigma must be positive");
    }
    double z = (y[i] - mu[i]) / sigma[i];
    acc += 0.5 * (z * z + std::log(sigma[i] * sigma[i]));
  }
  return acc / static_cast<double>(mu.size());
}

std::vector<double> residuals(std::span<const double> mu,
                              std::span<const double> sigma,
                              std::span<const double> y) {
  check_equal_sizes(mu.size(), sigma.size(), "residuals");
  check_equal_sizes(mu.size(), y.size(), "residuals");
  std::vector<double> z(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0)) {
      throw std::domain_error("residuals: sigma must be positive");
    }
    z[i] = (y[i] - mu[i]) / sigma[i];
  }
  return z;
}

std::vector<double> build_hyperconstraints(
    std::span<const double> z, const HyperConstraintAssignment& a) {
  check_assignment(z.size(), a);
  std::vector<double> q(static_cast<std::size_t>(a.count));
  std::size_t pos = 0;
  for (int r = 0; r < a.count; ++r) {
    double acc = 0.0;
    for (int j = 0; j < a.dof; ++j) {
      double v = z[a.indices[pos++]];
      acc += v * v;
    }
    q[static_cast<std::size_t>(r)] = acc;
  }
  return q;
}

HyperConstraintSet build_hyperconstraints(std::span<const double> z, int dof,
                                          int count, Rng& rng) {
  HyperConstraintSet set;
  set.assignment = draw_hyperconstraint_assignment(z.size(), dof, count, rng);
  set.q = build_hyperconstraints(z, set.assignment);
  return set;
}

double fcal_loss(std::span<const double> z, const HyperConstraintAssignment& a,
                 CalibrationKind kind) {
  if (a.count < 2) {
    throw std::invalid_argument(
        "fcal_loss: need at least 2 hyper-constraints to fit their variance");
  }
  std::vector<double> q = build_hyperconstraints(z, a);
  GaussianMoments emp = empirical_gaussian_stats(q);
  GaussianMoments target = clt_target(a.dof);
  switch (kind) {
    case CalibrationKind::FcalKl:
      return kl_gaussians(emp, target);
    case CalibrationKind::FcalWass:
      // Measured on standardized constraint values (q - K) / sqrt(2K), i.e.
      // the raw distance divided by the target variance. KL is invariant
      // under that rescaling; doing the same here keeps both divergences on
      // one scale so a single lambda works for either choice.
      return wass_gaussians(emp, target) / target.variance;
    default:
      throw std::invalid_argument("fcal_loss: kind must be FcalKl or FcalWass");
  }
}

double fcal_loss(std::span<const double> mu, std::span<const double> sigma,
                 std::span<const double> y, const LossSpec& spec, Rng& rng) {
  std::vector<double> z = residuals(mu, sigma, y);
  HyperConstraintAssignment a = draw_hyperconstraint_assignment(
      z.size(), spec.dof, spec.constraints, rng);
  return fcal_loss(z, a, spec.calibration);
}

double per_sample_calibration_loss(std::span<const double> mu,
                                   std::span<const double> sigma,
                                   std::span<const double> y) {
  check_equal_sizes(mu.size(), sigma.size(), "per_sample_calibration_loss");
  check_equal_sizes(mu.size(), y.size(), "per_sample_calibration_loss");
  if (mu.empty()) {
    throw std::invalid_argument("per_sample_calibration_loss: empty input");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    double r = y[i] - mu[i];
    double gap = r * r - sigma[i] * sigma[i];
    acc += gap * gap;
  }
  return acc / static_cast<double>(mu.size());
}

double combined_loss(double emp_risk, double fcal, double lambda) {
  check_lambda(lambda);
  return (1.0 - lambda) * emp_risk + lambda * fcal;
}

double empirical_risk(std::span<const double> mu, std::span<const double> sigma,
                      std::span<const double> y, const LossSpec& spec) {
  switch (spec.empirical) {
    case EmpiricalRisk::SmoothL1:
      return smooth_l1(mu, y, spec.smooth_l1_delta);
    case EmpiricalRisk::Nll:
      return nll_loss(mu, sigma, y);
  }
  throw std::invalid_argument("empirical_risk: unknown kind");
}

double training_objective(std::span<const double> mu,
                          std::span<const double> sigma,
                          std::span<const double> y, const LossSpec& spec,
                          const HyperConstraintAssignment* assignment) {
  spec.validate();
  double emp = empirical_risk(mu, sigma, y, spec);
  switch (spec.calibration) {
    case CalibrationKind::None:
      return emp;
    case CalibrationKind::FcalKl:
    case CalibrationKind::FcalWass: {
      if (assignment == nullptr) {
        throw std::invalid_argument(
            "training_objective: fcal calibration needs a hyper-constraint "
            "assignment");
      }
      std::vector<double> z = residuals(mu, sigma, y);
      return combined_loss(emp, fcal_loss(z, *assignment, spec.calibration),
                           spec.lambda);
    }
    case CalibrationKind::PerSampleVariance:
      return combined_loss(emp, per_sample_calibration_loss(mu, sigma, y),
                           spec.lambda);
  }
  throw std::invalid_argument("training_objective: unknown calibration kind");
}

// ---- Var flavors ----

namespace {

Tape& tape_of(std::span<const Var> xs, const char* what) {
  if (xs.empty()) {
    throw std::invalid_argument(std::string(what) + ": empty input");
  }
  return *xs.front().tape();
}

}  // namespace

Var smooth_l1(std::span<const Var> pred, std::span<const double> target,
              double delta) {
  check_equal_sizes(pred.size(), target.size(), "smooth_l1");
  Tape& tape = tape_of(pred, "smooth_l1");
  if (!(delta > 0.0)) {
    throw std::invalid_argument("smooth_l1: delta must be positive");
  }
  std::vector<Var> terms;
  terms.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Var e = pred[i] - target[i];
    // The Huber branch is resolved from the recorded forward value, the same
    // way relu resolves its kink at record time.
    if (std::fabs(e.value()) <= delta) {
      terms.push_back(square(e) / (2.0 * delta));
    } else if (e.value() > 0.0) {
      terms.push_back(e - 0.5 * delta);
    } else {
      terms.push_back(-e - 0.5 * delta);
    }
  }
  return tape.mean(terms);
}

Var nll_loss(std::span<const Var> mu, std::span<const Var> sigma,
             std::span<const double> y) {
  check_equal_sizes(mu.size(), sigma.size(), "nll_loss");
  check_equal_sizes(mu.size(), y.size(), "nll_loss");
  Tape& tape = tape_of(mu, "nll_loss");
  std::vector<Var> terms;
  terms.reserve(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    Var z = (y[i] - mu[i]) / sigma[i];
    terms.push_back(0.5 * (square(z) + log(square(sigma[i]))));
  }
  return tape.mean(terms);
}

std::vector<Var> residuals(std::span<const Var> mu, std::span<const Var> sigma,
                           std::span<const double> y) {
  check_equal_sizes(mu.size(), sigma.size(), "residuals");
  check_equal_sizes(mu.size(), y.size(), "residuals");
  std::vector<Var> z;
  z.reserve(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    z.push_back((y[i] - mu[i]) / sigma[i]);
  }
  return z;
}

std::vector<Var> build_hyperconstraints(std::span<const Var> z,
                                        const HyperConstraintAssignment& a) {
  check_assignment(z.size(), a);
  Tape& tape = tape_of(z, "build_hyperconstraints");
  // Square each residual once; constraints reduce over the shared nodes.
  std::vector<Var> zsq;
  zsq.reserve(z.size());
  for (const Var& v : z) zsq.push_back(square(v));
  std::vector<Var> q;
  q.reserve(static_cast<std::size_t>(a.count));
  std::vector<Var> row(static_cast<std::size_t>(a.dof));
  std::size_t pos = 0;
  for (int r = 0; r < a.count; ++r) {
    for (int j = 0; j < a.dof; ++j) {
      row[static_cast<std::size_t>(j)] = zsq[a.indices[pos++]];
    }
    q.push_back(tape.sum(row));
  }
  return q;
}

Var fcal_loss(std::span<const Var> z, const HyperConstraintAssignment& a,
              CalibrationKind kind) {
  if (a.count < 2) {
    throw std::invalid_argument(
        "fcal_loss: need at least 2 hyper-constraints to fit their variance");
  }
  std::vector<Var> q = build_hyperconstraints(z, a);
  Tape& tape = tape_of(z, "fcal_loss");
  Var m = tape.mean(q);
  std::vector<Var> devs;
  devs.reserve(q.size());
  for (const Var& qi : q) devs.push_back(square(qi - m));
  Var v = tape.sum(devs) / static_cast<double>(a.count - 1);
  const GaussianMoments target = clt_target(a.dof);
  switch (kind) {
    case CalibrationKind::FcalKl:
      return 0.5 * std::log(target.variance) - 0.5 * log(v) +
             (v + square(m - target.mean)) / (2.0 * target.variance) - 0.5;
    case CalibrationKind::FcalWass:
      // Same standardized form as the scalar flavor: raw distance scaled by
      // the target variance, so both divergences share one lambda scale.
      return (square(m - target.mean) +
              square(sqrt(v) - std::sqrt(target.variance))) /
             target.variance;
    default:
      throw std::invalid_argument("fcal_loss: kind must be FcalKl or FcalWass");
  }
}

Var per_sample_calibration_loss(std::span<const Var> mu,
                                std::span<const Var> sigma,
                                std::span<const double> y) {
  check_equal_sizes(mu.size(), sigma.size(), "per_sample_calibration_loss");
  check_equal_sizes(mu.size(), y.size(), "per_sample_calibration_loss");
  Tape& tape = tape_of(mu, "per_sample_calibration_loss");
  std::vector<Var> terms;
  terms.reserve(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    Var r = y[i] - mu[i];
    terms.push_back(square(square(r) - square(sigma[i])));
  }
  return tape.mean(terms);
}

Var combined_loss(const Var& emp_risk, const Var& fcal, double lambda) {
  check_lambda(lambda);
  return (1.0 - lambda) * emp_risk + lambda * fcal;
}

Var empirical_risk(std::span<const Var> mu, std::span<const Var> sigma,
                   std::span<const double> y, const LossSpec& spec) {
  switch (spec.empirical) {
    case EmpiricalRisk::SmoothL1:
      return smooth_l1(mu, y, spec.smooth_l1_delta);
    case EmpiricalRisk::Nll:
      return nll_loss(mu, sigma, y);
  }
  throw std::invalid_argument("empirical_risk: unknown kind");
}

Var training_objective(std::span<const Var> mu, std::span<const Var> sigma,
                       std::span<const double> y, const LossSpec& spec,
                       const HyperConstraintAssignment* assignment) {
  spec.validate();
  Var emp = empirical_risk(mu, sigma, y, spec);
  switch (spec.calibration) {
    case CalibrationKind::None:
      return emp;
    case CalibrationKind::FcalKl:
    case CalibrationKind::FcalWass: {
      if (assignment == nullptr) {
        throw std::invalid_argument(
            "training_objective: fcal calibration needs a hyper-constraint "
            "assignment");
      }
      std::vector<Var> z = residuals(mu, sigma, y);
      return combined_loss(emp, fcal_loss(z, *assignment, spec.calibration),
                           spec.lambda);
    }
    case CalibrationKind::PerSampleVariance:
      return combined_loss(emp, per_sample_calibration_loss(mu, sigma, y),
                           spec.lambda);
  }
  throw std::invalid_argument("training_objective: unknown calibration kind");
}

}  // namespace fcal
