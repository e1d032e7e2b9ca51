#include "xalign/errors.hpp"

#include <utility>

namespace xalign {

FormatError::FormatError(std::string record_id, const std::string& message)
    : std::runtime_error("record '" + record_id + "': " + message),
      record_id_(std::move(record_id)) {}

DivergenceError::DivergenceError(std::size_t epoch, const std::string& message)
    : std::runtime_error("epoch " + std::to_string(epoch) + ": " + message),
      epoch_(epoch) {}

}  // namespace xalign
