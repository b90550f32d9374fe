#pragma once

#include <stdexcept>
#include <string>

namespace relu_lawn {

/// Mismatched dimensions between a network, a pattern, a mixture or a vector.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Layer or depth index outside the valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Invalid numeric input: non-PSD covariance, empty box, nonpositive variance.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A requested enumeration would exceed its configured size cap.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Malformed input file. Messages name the file and the byte offset or field.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace relu_lawn
