// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sgm {

enum class ErrorCode {
    NotSPD,
    NoConvergence,
    NonFinite,
    InvalidParams,
    OutOfRange,
    ScheduleNegative,
    Diverged,
    FormatVersionMismatch,
    CorruptChecksum,
    SizeMismatch,
    TooLarge,
    Io,
    Config,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ScheduleNegative: return "ScheduleNegative";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::CorruptChecksum: return "CorruptChecksum";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

/// Library-wide exception. The code identifies the failure class so callers
/// (and tests) can branch on it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace sgm
