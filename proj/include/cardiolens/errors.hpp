#pragma once

#include <stdexcept>
#include <string>

namespace cardiolens {

// Malformed input documents and files: schema violations, bad magic bytes,
// count mismatches. Maps to CLI exit code 2.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failures: zero vectors, non-finite values, degenerate statistics.
// Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A metric needs both classes but the (re)sample contains only one.
class SingleClassError : public NumericError {
public:
    explicit SingleClassError(const std::string& what) : NumericError(what) {}
};

}  // namespace cardiolens
