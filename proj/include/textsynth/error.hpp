#pragma once

#include <stdexcept>
#include <string>

namespace textsynth {

/// Base class for every error the pipeline raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration could not be loaded or failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stage was invoked before the artifacts it consumes exist.
class UpstreamMissing : public Error {
 public:
  using Error::Error;
};

/// Persisted data failed a structural or integrity check.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace textsynth
