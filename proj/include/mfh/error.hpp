#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mfh {

// Error categories surfaced by the library. The CLI maps each one to a
// distinct process exit code (see exit_code()).
enum class ErrorCode {
    InvalidInput,
    NotPositiveDefinite,
    NotPSD,
    DimensionMismatch,
    RankDeficientDesign,
    NonPDSamplingCovariance,
    ParseError,
    IndexOutOfRange,
    DegenerateCorrection,
    SameArea,
    UnsupportedK,
    InvalidGroupSize,
    IoError,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

std::string_view to_string(ErrorCode code) noexcept;

// Process exit code for a failure of the given category; 0 is reserved for
// success and 1 for usage errors.
int exit_code(ErrorCode code) noexcept;

}  // namespace mfh
