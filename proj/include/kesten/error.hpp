#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kesten {

enum class ErrorKind {
  NotSquare,
  ZeroRow,
  NotMixing,
  InvalidInvolution,
  InvolutionMissing,
  InadmissibleContext,
  InadmissibleWord,
  NoConvergence,
  BackendMismatch,
  BallTooLarge,
  NotSymmetric,
  EmptyWordSet,
  NegativeInput,
  TruncationDominates,
  InvalidArgument,
  Config,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotSquare: return "NotSquare";
    case ErrorKind::ZeroRow: return "ZeroRow";
    case ErrorKind::NotMixing: return "NotMixing";
    case ErrorKind::InvalidInvolution: return "InvalidInvolution";
    case ErrorKind::InvolutionMissing: return "InvolutionMissing";
    case ErrorKind::InadmissibleContext: return "InadmissibleContext";
    case ErrorKind::InadmissibleWord: return "InadmissibleWord";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::BackendMismatch: return "BackendMismatch";
    case ErrorKind::BallTooLarge: return "BallTooLarge";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::EmptyWordSet: return "EmptyWordSet";
    case ErrorKind::NegativeInput: return "NegativeInput";
    case ErrorKind::TruncationDominates: return "TruncationDominates";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable kind alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

  /// Budget errors map to a distinct CLI exit code.
  bool is_budget() const noexcept {
    return kind_ == ErrorKind::BallTooLarge || kind_ == ErrorKind::NoConvergence ||
           kind_ == ErrorKind::TruncationDominates;
  }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace kesten
