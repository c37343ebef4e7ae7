#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fcal {

enum class NoiseKind { Homoscedastic, Heteroscedastic, GammaMismatch };

enum class Split { Train, Val, Test };

/// Disc-tracking benchmark configuration. A target disc and several
/// distractor discs are scattered uniformly on a square canvas; the label is
/// the target center, and the label noise grows when a distractor crowds the
/// target. All geometry constants are configurable; the defaults make the
/// noise scale span [sigma_min, sigma_min + sigma_range].
struct SynthConfig {
  std::size_t count = 5000;
  int distractors = 5;
  double canvas = 100.0;
  double radius_min = 2.0;
  double radius_max = 8.0;

  NoiseKind noise = NoiseKind::Heteroscedastic;
  double sigma = 2.0;        // homoscedastic noise level
  double sigma_min = 1.0;    // heteroscedastic floor
  double sigma_range = 4.0;  // added as the nearest distractor closes in
  double gamma_shape = 2.0;  // shape for the gamma-mismatch variant

  void validate() const;  // throws ConfigError
};

/// Generated benchmark, stored flat. Row i occupies
/// features[i*feature_dim .. (i+1)*feature_dim) and two label components.
/// sigma_true holds the hidden noise scale used to draw y_noisy, enabling
/// oracle evaluation. Split blocks are contiguous: the first floor(3n/5)
/// rows are train, the next floor(n/5) are val, the remainder test.
struct SynthDataset {
  SynthConfig config;
  std::uint64_t seed = 0;
  std::size_t feature_dim = 0;

  std::vector<double> features;    // count * feature_dim
  std::vector<double> y_clean;     // count * 2
  std::vector<double> y_noisy;     // count * 2
  std::vector<double> sigma_true;  // count * 2
  std::vector<Split> split;        // count

  std::size_t count() const { return split.size(); }
};

/// Contiguous view of one split.
struct SplitView {
  std::span<const double> x;
  std::span<const double> y;        // noisy labels, the training targets
  std::span<const double> y_clean;  // noise-free centers
  std::span<const double> sigma;    // true noise scale
  std::size_t count = 0;
};

/// Deterministic generation: the full dataset is a pure function of
/// (config, seed). Feature layout per row: target x, y, radius, then
/// (x, y, radius) for each distractor, all divided by the canvas size.
SynthDataset generate(const SynthConfig& config, std::uint64_t seed);

SplitView view(const SynthDataset& dataset, Split split);

/// Persist as a JSON manifest (config, seed, checksum, column names) plus a
/// CSV body next to it with the same stem. Doubles are written with %.17g
/// so the round trip is bit-exact.
void save(const SynthDataset& dataset, const std::filesystem::path& manifest);

/// Load and verify: checksum mismatches, version skew, and truncated bodies
/// all raise IoError rather than returning partial data.
SynthDataset load(const std::filesystem::path& manifest);

}  // namespace fcal
