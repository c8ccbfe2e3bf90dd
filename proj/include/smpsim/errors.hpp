#pragma once

#include <stdexcept>
#include <string>

namespace smpsim {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for undefined quantities: division by a zero reference mass, log of zero, and so on.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A player strategy produced a message that does not fit in the configured number of bits.
class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Unsupported : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A Las Vegas run consumed more players than the hard cap allows.
class PlayerCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal helper: throws E with msg unless cond holds.
template <class E = InvalidArgument>
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw E(msg);
}

}  // namespace smpsim
