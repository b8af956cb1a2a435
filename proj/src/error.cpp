#include "mfh/error.hpp"

namespace mfh {

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
{
}

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorCode::NonPDSamplingCovariance: return "NonPDSamplingCovariance";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::DegenerateCorrection: return "DegenerateCorrection";
    case ErrorCode::SameArea: return "SameArea";
    case ErrorCode::UnsupportedK: return "UnsupportedK";
    case ErrorCode::InvalidGroupSize: return "InvalidGroupSize";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

int exit_code(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidInput: return 2;
    case ErrorCode::ParseError: return 3;
    case ErrorCode::DimensionMismatch: return 4;
    case ErrorCode::RankDeficientDesign: return 5;
    case ErrorCode::NonPDSamplingCovariance: return 6;
    case ErrorCode::NotPositiveDefinite: return 7;
    case ErrorCode::NotPSD: return 8;
    case ErrorCode::IndexOutOfRange: return 9;
    case ErrorCode::DegenerateCorrection: return 10;
    case ErrorCode::SameArea: return 11;
    case ErrorCode::UnsupportedK: return 12;
    case ErrorCode::InvalidGroupSize: return 13;
    case ErrorCode::IoError: return 14;
    }
    return 1;
}

}  // namespace mfh
