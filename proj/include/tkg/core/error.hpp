#pragma once

#include <stdexcept>
#include <string>

namespace tkg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data, failed validation, corrupted artifacts.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad flags, bad config keys or values.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// An artifact required by a command is absent or was produced by a
/// different configuration.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace tkg
