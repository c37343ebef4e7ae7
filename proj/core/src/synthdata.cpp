#include "fcal/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fcal/distmath.hpp"
#include "fcal/errors.hpp"
#include "fcal/rng.hpp"

namespace fcal {

namespace {

constexpr int kFormatVersion = 1;

std::string noise_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Homoscedastic: return "homoscedastic";
    case NoiseKind::Heteroscedastic: return "heteroscedastic";
    case NoiseKind::GammaMismatch: return "gamma";
  }
  throw std::invalid_argument("unknown noise kind");
}

NoiseKind noise_from_name(const std::string& name) {
  if (name == "homoscedastic") return NoiseKind::Homoscedastic;
  if (name == "heteroscedastic") return NoiseKind::Heteroscedastic;
  if (name == "gamma") return NoiseKind::GammaMismatch;
  throw IoError("dataset manifest: unknown noise kind '" + name + "'");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  throw std::invalid_argument("unknown split");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw IoError("dataset body: unknown split label '" + name + "'");
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

void append_g17(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

std::string csv_header(int distractors) {
  std::string h = "tx,ty,tr";
  for (int i = 0; i < distractors; ++i) {
    std::string n = std::to_string(i);
    h += ",d" + n + "x,d" + n + "y,d" + n + "r";
  }
  h += ",y_clean_x,y_clean_y,y_noisy_x,y_noisy_y,sigma_x,sigma_y,split";
  return h;
}

std::string render_body(const SynthDataset& d) {
  std::string out = csv_header(d.config.distractors);
  out += '\n';
  for (std::size_t i = 0; i < d.count(); ++i) {
    for (std::size_t f = 0; f < d.feature_dim; ++f) {
      if (f > 0) out += ',';
      append_g17(out, d.features[i * d.feature_dim + f]);
    }
    for (std::size_t c = 0; c < 2; ++c) {
      out += ',';
      append_g17(out, d.y_clean[i * 2 + c]);
    }
    for (std::size_t c = 0; c < 2; ++c) {
      out += ',';
      append_g17(out, d.y_noisy[i * 2 + c]);
    }
    for (std::size_t c = 0; c < 2; ++c) {
      out += ',';
      append_g17(out, d.sigma_true[i * 2 + c]);
    }
    out += ',';
    out += split_name(d.split[i]);
    out += '\n';
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (count < 50) {
    throw ConfigError("synth: need at least 50 samples to split 3:1:1, got " +
                      std::to_string(count));
  }
  if (distractors < 0) throw ConfigError("synth: distractors must be >= 0");
  if (!(canvas > 0.0)) throw ConfigError("synth: canvas size must be positive");
  if (!(radius_min > 0.0) || radius_max < radius_min) {
    throw ConfigError("synth: disc radius range is invalid");
  }
  if (noise == NoiseKind::Homoscedastic) {
    if (sigma < 0.0) throw ConfigError("synth: sigma must be >= 0");
  } else {
    if (!(sigma_min > 0.0) || sigma_range < 0.0) {
      throw ConfigError("synth: sigma_min must be > 0 and sigma_range >= 0");
    }
  }
  if (noise == NoiseKind::GammaMismatch && !(gamma_shape > 0.0)) {
    throw ConfigError("synth: gamma shape must be positive, got " +
                      std::to_string(gamma_shape));
  }
}

SynthDataset generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  SynthDataset d;
  d.config = config;
  d.seed = seed;
  d.feature_dim = 3 * (1 + static_cast<std::size_t>(config.distractors));
  d.features.reserve(config.count * d.feature_dim);
  d.y_clean.reserve(config.count * 2);
  d.y_noisy.reserve(config.count * 2);
  d.sigma_true.reserve(config.count * 2);
  d.split.reserve(config.count);

  // The noise scale saturates once a distractor edge comes within a quarter
  // of the canvas diagonal of the target edge.
  const double d_ref = config.canvas * std::sqrt(2.0) / 4.0;
  Rng rng(seed);

  for (std::size_t i = 0; i < config.count; ++i) {
    const double tx = rng.uniform(0.0, config.canvas);
    const double ty = rng.uniform(0.0, config.canvas);
    const double tr = rng.uniform(config.radius_min, config.radius_max);
    d.features.push_back(tx / config.canvas);
    d.features.push_back(ty / config.canvas);
    d.features.push_back(tr / config.canvas);

    double nearest_gap = std::numeric_limits<double>::infinity();
    for (int k = 0; k < config.distractors; ++k) {
      const double dx = rng.uniform(0.0, config.canvas);
      const double dy = rng.uniform(0.0, config.canvas);
      const double dr = rng.uniform(config.radius_min, config.radius_max);
      d.features.push_back(dx / config.canvas);
      d.features.push_back(dy / config.canvas);
      d.features.push_back(dr / config.canvas);
      const double gap = std::hypot(tx - dx, ty - dy) - tr - dr;
      nearest_gap = std::min(nearest_gap, gap);
    }

    double sigma_star;
    if (config.noise == NoiseKind::Homoscedastic) {
      sigma_star = config.sigma;
    } else {
      double crowding = config.distractors == 0
                            ? 0.0
                            : std::clamp(1.0 - nearest_gap / d_ref, 0.0, 1.0);
      sigma_star = config.sigma_min + config.sigma_range * crowding;
    }

    d.y_clean.push_back(tx);
    d.y_clean.push_back(ty);
    for (int c = 0; c < 2; ++c) {
      double noise = 0.0;
      if (sigma_star > 0.0) {
        if (config.noise == NoiseKind::GammaMismatch) {
          // Zero-mean, variance sigma_star^2: Gamma(shape, theta) has
          // variance shape * theta^2, so theta = sigma_star / sqrt(shape)
          // and the mean shape * theta is subtracted off. Only the shape of
          // the noise differs across gamma values.
          const double theta = sigma_star / std::sqrt(config.gamma_shape);
          noise = sample_gamma(rng, config.gamma_shape, theta) -
                  config.gamma_shape * theta;
        } else {
          noise = rng.normal(0.0, sigma_star);
        }
      }
      d.y_noisy.push_back(d.y_clean[i * 2 + static_cast<std::size_t>(c)] +
                          noise);
      d.sigma_true.push_back(sigma_star);
    }

    const std::size_t n_train = 3 * config.count / 5;
    const std::size_t n_val = config.count / 5;
    d.split.push_back(i < n_train           ? Split::Train
                      : i < n_train + n_val ? Split::Val
                                            : Split::Test);
  }
  return d;
}

SplitView view(const SynthDataset& d, Split split) {
  const std::size_t n_train = 3 * d.count() / 5;
  const std::size_t n_val = d.count() / 5;
  std::size_t begin = 0;
  std::size_t count = 0;
  switch (split) {
    case Split::Train:
      begin = 0;
      count = n_train;
      break;
    case Split::Val:
      begin = n_train;
      count = n_val;
      break;
    case Split::Test:
      begin = n_train + n_val;
      count = d.count() - n_train - n_val;
      break;
  }
  SplitView v;
  v.count = count;
  v.x = std::span<const double>(d.features)
            .subspan(begin * d.feature_dim, count * d.feature_dim);
  v.y = std::span<const double>(d.y_noisy).subspan(begin * 2, count * 2);
  v.y_clean = std::span<const double>(d.y_clean).subspan(begin * 2, count * 2);
  v.sigma = std::span<const double>(d.sigma_true).subspan(begin * 2, count * 2);
  return v;
}

void save(const SynthDataset& d, const std::filesystem::path& manifest) {
  const std::string body = render_body(d);
  std::filesystem::path body_path = manifest;
  body_path.replace_extension(".csv");

  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "synth_dataset";
  j["seed"] = d.seed;
  j["body"] = body_path.filename().string();
  j["checksum_fnv1a64"] = hex64(fnv1a64(body));
  j["feature_dim"] = d.feature_dim;
  j["config"] = {{"count", d.config.count},
                 {"distractors", d.config.distractors},
                 {"canvas", d.config.canvas},
                 {"radius_min", d.config.radius_min},
                 {"radius_max", d.config.radius_max},
                 {"noise", noise_name(d.config.noise)},
                 {"sigma", d.config.sigma},
                 {"sigma_min", d.config.sigma_min},
                 {"sigma_range", d.config.sigma_range},
                 {"gamma_shape", d.config.gamma_shape}};

  std::ofstream mf(manifest, std::ios::binary);
  if (!mf) throw IoError("cannot open " + manifest.string() + " for writing");
  mf << j.dump(2) << "\n";
  if (!mf) throw IoError("failed writing manifest " + manifest.string());

  std::ofstream bf(body_path, std::ios::binary);
  if (!bf) throw IoError("cannot open " + body_path.string() + " for writing");
  bf << body;
  if (!bf) throw IoError("failed writing dataset body " + body_path.string());
}

SynthDataset load(const std::filesystem::path& manifest) {
  std::ifstream mf(manifest, std::ios::binary);
  if (!mf) throw IoError("cannot open dataset manifest " + manifest.string());
  nlohmann::json j;
  try {
    mf >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("dataset manifest: invalid JSON: " + std::string(e.what()));
  }

  SynthDataset d;
  std::string body_name;
  std::string checksum;
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw IoError("dataset manifest: unsupported format_version " +
                    j.at("format_version").dump());
    }
    if (j.at("kind").get<std::string>() != "synth_dataset") {
      throw IoError("dataset manifest: unexpected kind " + j.at("kind").dump());
    }
    d.seed = j.at("seed").get<std::uint64_t>();
    body_name = j.at("body").get<std::string>();
    checksum = j.at("checksum_fnv1a64").get<std::string>();
    d.feature_dim = j.at("feature_dim").get<std::size_t>();
    const auto& c = j.at("config");
    d.config.count = c.at("count").get<std::size_t>();
    d.config.distractors = c.at("distractors").get<int>();
    d.config.canvas = c.at("canvas").get<double>();
    d.config.radius_min = c.at("radius_min").get<double>();
    d.config.radius_max = c.at("radius_max").get<double>();
    d.config.noise = noise_from_name(c.at("noise").get<std::string>());
    d.config.sigma = c.at("sigma").get<double>();
    d.config.sigma_min = c.at("sigma_min").get<double>();
    d.config.sigma_range = c.at("sigma_range").get<double>();
    d.config.gamma_shape = c.at("gamma_shape").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("dataset manifest: missing or mistyped field: " +
                  std::string(e.what()));
  }

  const std::filesystem::path body_path = manifest.parent_path() / body_name;
  std::ifstream bf(body_path, std::ios::binary);
  if (!bf) throw IoError("cannot open dataset body " + body_path.string());
  std::ostringstream buf;
  buf << bf.rdbuf();
  const std::string body = buf.str();
  if (hex64(fnv1a64(body)) != checksum) {
    throw IoError("dataset body " + body_path.string() +
                  " does not match manifest checksum (file edited, truncated, "
                  "or regenerated with different settings)");
  }

  std::istringstream lines(body);
  std::string line;
  if (!std::getline(lines, line)) {
    throw IoError("dataset body is empty: " + body_path.string());
  }
  if (line != csv_header(d.config.distractors)) {
    throw IoError("dataset body header does not match the manifest config");
  }
  const std::size_t columns = d.feature_dim + 7;
  d.features.reserve(d.config.count * d.feature_dim);
  d.y_clean.reserve(d.config.count * 2);
  d.y_noisy.reserve(d.config.count * 2);
  d.sigma_true.reserve(d.config.count * 2);
  d.split.reserve(d.config.count);
  while (std::getline(lines, line)) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(start));
        break;
      }
      cells.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (cells.size() != columns) {
      throw IoError("dataset body row has " + std::to_string(cells.size()) +
                    " columns, expected " + std::to_string(columns));
    }
    auto num = [&](std::size_t idx) {
      const std::string& s = cells[idx];
      char* end = nullptr;
      double v = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size()) {
        throw IoError("dataset body: unparseable number '" + s + "'");
      }
      return v;
    };
    for (std::size_t f = 0; f < d.feature_dim; ++f) {
      d.features.push_back(num(f));
    }
    d.y_clean.push_back(num(d.feature_dim));
    d.y_clean.push_back(num(d.feature_dim + 1));
    d.y_noisy.push_back(num(d.feature_dim + 2));
    d.y_noisy.push_back(num(d.feature_dim + 3));
    d.sigma_true.push_back(num(d.feature_dim + 4));
    d.sigma_true.push_back(num(d.feature_dim + 5));
    d.split.push_back(split_from_name(cells[d.feature_dim + 6]));
  }
  if (d.count() != d.config.count) {
    throw IoError("dataset body has " + std::to_string(d.count()) +
                  " rows, manifest says " + std::to_string(d.config.count));
  }
  return d;
}

}  // namespace fcal
