#pragma once

#include <stdexcept>
#include <string>

namespace openrgbt {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Two rasters, masks or matrices that must agree in shape do not.
class DimensionMismatch : public Error {
  public:
    using Error::Error;
};

/// A value violates a documented precondition or type invariant.
class InvalidInput : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Failure talking to a model backend. `transient` marks transport-level
/// failures (timeouts, dead pipes, HTTP errors) that are worth retrying;
/// in-band error responses are not.
class BackendError : public Error {
  public:
    BackendError(std::string request_id, const std::string& what, bool transient)
        : Error(request_id.empty() ? what : "request " + request_id + ": " + what),
          request_id_(std::move(request_id)), transient_(transient) {}

    const std::string& request_id() const noexcept { return request_id_; }
    bool transient() const noexcept { return transient_; }

  private:
    std::string request_id_;
    bool transient_;
};

} // namespace openrgbt
