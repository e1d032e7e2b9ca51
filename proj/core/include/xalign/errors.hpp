#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xalign {

// Precondition violated by the caller (bad dimensions, empty input, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A corpus or score file that does not satisfy its schema. Carries the id of
// the offending record (or "line N" when the record has no usable id).
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string record_id, const std::string& message);

  const std::string& record_id() const noexcept { return record_id_; }

 private:
  std::string record_id_;
};

// Gradient requested through a non-differentiable point (zero-norm vector).
class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A loss batch in which some row or column has no positive pair.
class LabelingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, const std::string& message);

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace xalign
