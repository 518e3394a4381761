#pragma once

#include <stdexcept>
#include <string>

namespace layerbench {

// Machine-parsable failure codes. Thrown as Error for conditions that are
// genuine failures of the operation's contract; conditions that are expected
// outcomes of valid inputs (total internal reflection, occlusion) are
// represented as std::optional at the call site instead.
enum class ErrorCode {
  NonPositiveDepth,
  NoConvergence,
  DegenerateRays,
  BehindCamera,
  InsufficientViews,
  SingularInitialization,
  MismatchedPairs,
  DegenerateBaseline,
  EmptyInput,
  DuplicateTagInImage,
  MissingLabel,
  CalibrationMismatch,
  EmptyCandidateSet,
  MissingLayer,
  EmptyDataset,
  SizeMismatch,
  FormatError,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }
  const char* code_name() const { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace layerbench
