#include "bigr/errors.hpp"

namespace bigr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::UnsupportedWidth: return "unsupported width";
    case ErrorKind::CheckpointIncompatible: return "checkpoint incompatible";
    case ErrorKind::NumericFailure: return "numeric failure";
    case ErrorKind::TrainingFailure: return "training failure";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Load: return "load error";
    case ErrorKind::Internal: return "internal error";
  }
  return "error";
}

}  // namespace bigr
