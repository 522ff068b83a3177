#pragma once

#include <stdexcept>
#include <string>

namespace balmix {

// Out-of-range or inconsistent arguments.
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed input files. The message names the offending line.
class IngestionError : public std::runtime_error {
 public:
  explicit IngestionError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values reaching a numeric kernel.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A metric whose value is mathematically undefined on the given input
// (zero denominator, all-tied ranking).
class UndefinedMetric : public std::domain_error {
 public:
  explicit UndefinedMetric(const std::string& what) : std::domain_error(what) {}
};

class BootstrapFailure : public std::runtime_error {
 public:
  explicit BootstrapFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace balmix
