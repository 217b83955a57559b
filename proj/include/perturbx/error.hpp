#pragma once

#include <stdexcept>
#include <string>

namespace perturbx {

/// Precondition violated by the caller (bad dimensions, incompatible options).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure talking to an external model. All transport errors are retryable.
class TransportError : public std::runtime_error {
 public:
  enum class Kind { io, handshake, timeout, malformed, remote };

  TransportError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline const char* to_string(TransportError::Kind kind) {
  switch (kind) {
    case TransportError::Kind::io: return "io";
    case TransportError::Kind::handshake: return "handshake";
    case TransportError::Kind::timeout: return "timeout";
    case TransportError::Kind::malformed: return "malformed";
    case TransportError::Kind::remote: return "remote";
  }
  return "unknown";
}

}  // namespace perturbx
