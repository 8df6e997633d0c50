#ifndef UPL_ERROR_HPP
#define UPL_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace upl {

enum class ErrorKind {
  ZeroRow,
  ShapeMismatch,
  NonFinite,
  MissingWeights,
  MarginLengthMismatch,
  TooFewItems,
  BadCutoff,
  Diverged,
  FormatError,
  DimMismatch,
  CountMismatch,
  InvalidArgument,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroRow: return "ZeroRow";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::MissingWeights: return "MissingWeights";
    case ErrorKind::MarginLengthMismatch: return "MarginLengthMismatch";
    case ErrorKind::TooFewItems: return "TooFewItems";
    case ErrorKind::BadCutoff: return "BadCutoff";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace upl

#endif  // UPL_ERROR_HPP
