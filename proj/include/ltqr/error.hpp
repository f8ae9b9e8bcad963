#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ltqr {

/// Domain error carrying the name of the offending field or input.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message, std::string field = {})
      : std::runtime_error(message), field_(std::move(field)) {}

  [[nodiscard]] const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace ltqr
