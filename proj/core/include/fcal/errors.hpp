#pragma once

#include <stdexcept>
#include <string>

namespace fcal {

/// Bad user-facing configuration: unknown option values, inconsistent
/// dimensions, malformed config files. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training diverged or produced non-finite values. Carries enough context
/// (step, batch) in the message to reproduce the failure from the seed.
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem or serialization failure: unreadable files, checksum
/// mismatches, version skew in checkpoints or dataset manifests.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fcal
