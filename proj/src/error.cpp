#include "polarbg/error.hpp"

namespace polarbg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::InvalidPoint: return "InvalidPoint";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::DegenerateMatrix: return "DegenerateMatrix";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::NoStaticMode: return "NoStaticMode";
    case ErrorCode::EmptySamples: return "EmptySamples";
    case ErrorCode::EmptyHistogram: return "EmptyHistogram";
    case ErrorCode::InvalidPolygon: return "InvalidPolygon";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::FrameOrderError: return "FrameOrderError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  return code == ErrorCode::NumericalFailure || code == ErrorCode::DegenerateMatrix;
}

}  // namespace polarbg
