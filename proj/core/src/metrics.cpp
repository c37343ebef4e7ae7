#include "fcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "fcal/distmath.hpp"
#include "fcal/errors.hpp"
#include "fcal/losses.hpp"

namespace fcal {

namespace {

std::vector<std::size_t> bin_counts(std::span<const double> samples,
                                    const TargetCdf& target_cdf, int bins) {
  if (samples.empty()) {
    throw std::invalid_argument("calibration metrics: empty sample vector");
  }
  if (bins < 2) {
    throw std::invalid_argument("calibration metrics: need at least 2 bins");
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double x : samples) {
    double u = target_cdf(x);
    auto b = static_cast<long>(u * bins);  // edge values land in the upper bin
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;
    ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

double round_sig(double v, int digits) {
  if (!std::isfinite(v) || v == 0.0) return v;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*e", digits - 1, v);
  return std::strtod(buf, nullptr);
}

nlohmann::json rounded(double v) { return round_sig(v, 9); }

std::string format_confidence(double c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", c);
  return buf;
}

}  // namespace

double ece(std::span<const double> samples, const TargetCdf& target_cdf,
           int bins) {
  auto counts = bin_counts(samples, target_cdf, bins);
  const double n = static_cast<double>(samples.size());
  const double ideal = 1.0 / static_cast<double>(bins);
  double acc = 0.0;
  for (std::size_t c : counts) {
    double share = static_cast<double>(c) / n;
    acc += share * std::fabs(ideal - share);
  }
  return acc;
}

double mce(std::span<const double> samples, const TargetCdf& target_cdf,
           int bins) {
  auto counts = bin_counts(samples, target_cdf, bins);
  const double n = static_cast<double>(samples.size());
  const double ideal = 1.0 / static_cast<double>(bins);
  double worst = 0.0;
  for (std::size_t c : counts) {
    double share = static_cast<double>(c) / n;
    worst = std::max(worst, std::fabs(ideal - share));
  }
  return worst;
}

std::vector<ReliabilityPoint> reliability_curve(std::span<const double> samples,
                                                const TargetCdf& target_cdf,
                                                int bins) {
  auto counts = bin_counts(samples, target_cdf, bins);
  const double n = static_cast<double>(samples.size());
  std::vector<ReliabilityPoint> curve;
  curve.reserve(counts.size());
  std::size_t running = 0;
  for (int s = 0; s < bins; ++s) {
    running += counts[static_cast<std::size_t>(s)];
    ReliabilityPoint p;
    p.bin_index = s + 1;
    p.expected_cum = static_cast<double>(s + 1) / static_cast<double>(bins);
    p.empirical_cum = static_cast<double>(running) / n;
    curve.push_back(p);
  }
  return curve;
}

DivergencePair eval_divergences(std::span<const double> q, int dof) {
  if (q.size() < 2) {
    throw std::invalid_argument(
        "eval_divergences: need at least 2 hyper-constraint values");
  }
  if (dof < 1) {
    throw std::invalid_argument("eval_divergences: dof must be positive");
  }
  const double k = static_cast<double>(dof);
  const double scale = std::sqrt(2.0 * k);
  std::vector<double> standardized(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    standardized[i] = (q[i] - k) / scale;
  }
  GaussianMoments emp = empirical_gaussian_stats(standardized);
  GaussianMoments target{0.0, 1.0};
  return {kl_gaussians(emp, target), wass_gaussians(emp, target)};
}

double consistency_rate(std::span<const double> z, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw ConfigError("consistency_rate: confidence must lie in (0, 1), got " +
                      std::to_string(confidence));
  }
  if (z.empty()) {
    throw std::invalid_argument("consistency_rate: empty residual vector");
  }
  const double bound = std_normal_inv_cdf(0.5 * (1.0 + confidence));
  std::size_t inside = 0;
  for (double v : z) {
    if (std::fabs(v) <= bound) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(z.size());
}

MetricsReport evaluate_params(std::span<const double> mu,
                              std::span<const double> sigma,
                              std::span<const double> y,
                              std::span<const double> y_clean,
                              std::size_t count, int components,
                              const MetricsConfig& config) {
  const std::size_t n = count * static_cast<std::size_t>(components);
  if (mu.size() != n || sigma.size() != n || y.size() != n) {
    throw std::invalid_argument("evaluate_params: prediction/label sizes "
                                "disagree with count * components");
  }
  if (!y_clean.empty() && y_clean.size() != n) {
    throw std::invalid_argument("evaluate_params: y_clean has wrong size");
  }
  if (n < static_cast<std::size_t>(config.dof)) {
    throw std::invalid_argument(
        "evaluate_params: fewer residuals than dof; shrink dof or evaluate "
        "on more samples");
  }

  MetricsReport rep;
  rep.sample_count = count;
  rep.component_count = components;
  rep.bins = config.bins;
  rep.dof = config.dof;
  rep.constraints = config.constraints;
  rep.eval_seed = config.eval_seed;

  std::vector<double> z = residuals(mu, sigma, y);
  TargetCdf normal_cdf = [](double x) { return std_normal_cdf(x); };
  rep.ece_z = ece(z, normal_cdf, config.bins);
  rep.mce_z = mce(z, normal_cdf, config.bins);
  rep.reliability_z = reliability_curve(z, normal_cdf, config.bins);

  Rng rng(config.eval_seed);
  HyperConstraintSet set =
      build_hyperconstraints(z, config.dof, config.constraints, rng);
  const double k = static_cast<double>(config.dof);
  TargetCdf chi2 = [k](double x) { return chi_squared_cdf(x, k); };
  rep.ece_q = ece(set.q, chi2, config.bins);
  rep.mce_q = mce(set.q, chi2, config.bins);
  rep.reliability_q = reliability_curve(set.q, chi2, config.bins);
  DivergencePair div = eval_divergences(set.q, config.dof);
  rep.kld_q = div.kld_q;
  rep.w_dist_q = div.w_dist_q;

  rep.nll = nll_loss(mu, sigma, y);
  rep.smooth_l1 = smooth_l1(mu, y, config.smooth_l1_delta);
  if (!y_clean.empty()) {
    rep.smooth_l1_clean = smooth_l1(mu, y_clean, config.smooth_l1_delta);
  }
  for (double c : config.confidences) {
    rep.consistency.emplace_back(c, consistency_rate(z, c));
  }
  return rep;
}

MetricsReport evaluate(const MlpRegressor& model,
                       std::span<const double> x_flat,
                       std::span<const double> y_flat,
                       std::span<const double> y_clean_flat, std::size_t count,
                       const MetricsConfig& config) {
  auto pred = model.predict(x_flat, count);
  return evaluate_params(pred.mu, pred.sigma, y_flat, y_clean_flat, count,
                         model.config().out_dim(), config);
}

std::string to_json_string(const MetricsReport& report) {
  nlohmann::json j;
  j["sample_count"] = report.sample_count;
  j["component_count"] = report.component_count;
  j["bins"] = report.bins;
  j["dof"] = report.dof;
  j["constraints"] = report.constraints;
  j["eval_seed"] = report.eval_seed;
  j["nll"] = rounded(report.nll);
  j["ece_z"] = rounded(report.ece_z);
  j["mce_z"] = rounded(report.mce_z);
  j["ece_q"] = rounded(report.ece_q);
  j["mce_q"] = rounded(report.mce_q);
  j["kld_q"] = rounded(report.kld_q);
  j["w_dist_q"] = rounded(report.w_dist_q);
  j["smooth_l1"] = rounded(report.smooth_l1);
  if (report.smooth_l1_clean) {
    j["smooth_l1_clean"] = rounded(*report.smooth_l1_clean);
  }
  if (report.temperature) {
    j["temperature"] = rounded(*report.temperature);
  }
  if (report.val_nll) {
    j["val_nll"] = rounded(*report.val_nll);
  }
  nlohmann::json cons;
  for (const auto& [c, rate] : report.consistency) {
    cons[format_confidence(c)] = rounded(rate);
  }
  j["consistency"] = cons;
  return j.dump(2) + "\n";
}

std::string reliability_csv(std::span<const ReliabilityPoint> curve) {
  std::string out = "bin_index,expected_cum,empirical_cum\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", p.bin_index,
                  p.expected_cum, p.empirical_cum);
    out += buf;
  }
  return out;
}

}  // namespace fcal
