#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polarbg {

enum class ErrorCode {
  DegenerateInput,
  InvalidPoint,
  InvalidConfig,
  ShapeMismatch,
  TooFewFrames,
  DegenerateMatrix,
  NumericalFailure,
  NoStaticMode,
  EmptySamples,
  EmptyHistogram,
  InvalidPolygon,
  ModelMismatch,
  FrameOrderError,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// True for errors that come from numerical breakdown rather than bad input.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace polarbg
