#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace surgonair {

// Error categories shared with the C API status codes (see surgonair.h).
enum class ErrorCode {
    Ok = 0,
    InvalidArgument = 1,
    Parse = 2,
    Validation = 3,
    EmptyInput = 4,
    Io = 5,
    Client = 6,       // transport-level failure talking to a model backend; retryable
    Causality = 7,    // a streaming model touched data it must not see yet
    MissingStage = 8, // a command needs artifacts an earlier stage has not produced
    Partial = 9,      // some per-video work failed, the rest completed
    Internal = 10,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }
    bool retryable() const { return code_ == ErrorCode::Client; }

private:
    ErrorCode code_;
};

// One violated hierarchy constraint. assemble_record collects every violation
// it finds, not just the first.
struct Violation {
    std::string constraint; // e.g. "phase_overlap", "step_escapes_phase", "orphan_word"
    std::size_t index = 0;  // index of the offending phase/step/word
    std::string detail;
};

class ValidationError : public Error {
public:
    ValidationError(std::string message, std::vector<Violation> violations)
        : Error(ErrorCode::Validation, std::move(message)),
          violations_(std::move(violations)) {}

    explicit ValidationError(const std::string& message)
        : Error(ErrorCode::Validation, message) {}

    const std::vector<Violation>& violations() const { return violations_; }

private:
    std::vector<Violation> violations_;
};

} // namespace surgonair
