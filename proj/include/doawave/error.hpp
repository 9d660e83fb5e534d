#pragma once

#include <stdexcept>
#include <string>

namespace doawave {

// Base class for every error raised by the library. Callers that only care
// about "something went wrong" catch this; the subclasses exist so the CLI
// can map failures onto exit codes and tests can check the failure kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InputTooShort : public Error {
 public:
  using Error::Error;
};

class WavError : public Error {
 public:
  WavError(const std::string& chunk, const std::string& what)
      : Error("wav: " + what + " (chunk '" + chunk + "')"), chunk_(chunk) {}
  const std::string& chunk() const { return chunk_; }

 private:
  std::string chunk_;
};

// Raised when a matrix that must be inverted is singular even after loading.
class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace doawave
