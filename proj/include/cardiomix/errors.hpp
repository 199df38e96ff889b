#pragma once

#include <stdexcept>
#include <string>

namespace cardiomix {

// Bad caller input: mismatched dimensions, invalid parameter values,
// unusable command-line / config combinations.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable file contents: bad magic, unparsable header or syntax.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// File with a wrong container format or version (magic/version mismatch).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid file whose payload disagrees with its header
// (truncated data, shape mismatch).
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation requested on a model architecture that cannot support it.
struct UnsupportedArchError : UsageError {
    explicit UnsupportedArchError(const std::string& msg) : UsageError(msg) {}
};

// Metric whose denominator vanishes for the given inputs.
struct UndefinedMetricError : std::runtime_error {
    explicit UndefinedMetricError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cardiomix
