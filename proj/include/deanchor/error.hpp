#pragma once

#include <stdexcept>
#include <string>

namespace deanchor {

// Error categories; the CLI maps each to a distinct exit status.
enum class ErrorKind {
    Parameter,
    Evidence,
    Model,
    Capability,
    Calibration,
    Budget,
    Config,
    Data,
    Training,
    Sampling,
    State,
    NotFound,
    Conflict,
    Gone,
    Validation,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace deanchor
