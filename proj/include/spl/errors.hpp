#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spl {

// Bad arguments: shape mismatches, malformed distributions, out-of-range classes.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Raised from inside a training loop. Carries the optimizer step at which it fired.
class TrainingFault : public std::runtime_error {
public:
    TrainingFault(const std::string& what, std::int64_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File-system failures; the message always includes the offending path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A persisted document could be read but not understood.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace spl
