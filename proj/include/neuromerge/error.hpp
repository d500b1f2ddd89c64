#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace neuromerge {

// Base of every error thrown by the library. The CLI maps subclasses to exit
// codes, so new error kinds must derive from one of the groups below.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor or layer dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Numerically degenerate input: zero norms, empty candidate sets, undefined ratios.
class DegenerateError : public Error {
public:
    using Error::Error;
};

// Bad argument values (ranges, counts).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Merge configuration that cannot be applied to the given network.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed model or dataset on disk (manifest schema, blob sizes).
class FormatError : public Error {
public:
    using Error::Error;
};

// Filesystem failure; the message carries the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

// A network failed validation. diagnostics() holds every problem found.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> diagnostics);

    const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

private:
    std::vector<std::string> diagnostics_;
};

} // namespace neuromerge
