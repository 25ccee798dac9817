#pragma once

#include <stdexcept>
#include <string>

namespace mbsnn {

// File and parse problems (bad magic, truncated payloads, missing files).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses and similar numeric breakdowns.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mbsnn
