#pragma once

#include <stdexcept>
#include <string>

namespace probekit {

// Root of every error raised by the library. Each subclass corresponds to
// one failure class the operations document (bounds, state, validation...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw = {})
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class CassetteError : public Error {
 public:
  using Error::Error;
};

class JudgeError : public ParseError {
 public:
  using ParseError::ParseError;
};

class ShortfallError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace probekit
