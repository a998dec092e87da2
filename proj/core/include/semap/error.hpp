#pragma once

#include <stdexcept>
#include <string>

namespace semap {

/// Base for all errors raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside a documented numeric domain (e.g. Morton coordinate overflow).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Violated API precondition: shape mismatch, stale trace, snapshot drift.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class EmptyMapError : public Error {
 public:
  using Error::Error;
};

}  // namespace semap
