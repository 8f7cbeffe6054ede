#pragma once

#include <stdexcept>
#include <string>

namespace metafit {

enum class ErrorCode {
  InvalidInput,
  InvalidCamera,
  DegenerateShape,
  NumericOverflow,
  Diverged,
  AlignmentDegenerate,
  UndefinedCorrelation,
  TrainingDivergence,
  InvalidConfig,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::InvalidCamera: return "invalid-camera";
    case ErrorCode::DegenerateShape: return "degenerate-shape";
    case ErrorCode::NumericOverflow: return "numeric-overflow";
    case ErrorCode::Diverged: return "diverged";
    case ErrorCode::AlignmentDegenerate: return "alignment-degenerate";
    case ErrorCode::UndefinedCorrelation: return "undefined-correlation";
    case ErrorCode::TrainingDivergence: return "training-divergence";
    case ErrorCode::InvalidConfig: return "invalid-config";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace metafit
