#pragma once

#include <stdexcept>
#include <string>

namespace stiefel {

enum class ErrorCode {
  DimensionMismatch,
  NonFinite,
  NotSymmetric,
  NotOrthonormal,
  NegativeBaseForFractionalPower,
  RecipeRequiresFullSelectors,
  BlockOverlap,
  SizeTooLargeForOracle,
  NotPositiveDefinite,
  DegenerateDenominator,
  InvalidProblem,
  InvalidArgument,
};

const char *error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

} // namespace stiefel
