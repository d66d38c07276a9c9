#pragma once

#include <stdexcept>
#include <string>

namespace wiae {

// Root of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape, length, range).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Sample too small for the asymptotic approximation a test relies on.
class SmallSample : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

// Input data cannot support the requested computation (constant series,
// series shorter than a window, ...).
class DegenerateData : public Error {
 public:
  using Error::Error;
};

// Values outside the support a statistic is defined on.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Zero first difference in a runs test.
class TieError : public Error {
 public:
  using Error::Error;
};

class Unimplemented : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// File exists but its contents are malformed or truncated.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace detail
}  // namespace wiae
