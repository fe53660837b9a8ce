#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wearad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string &message)
        : Error("line " + std::to_string(line) + ": " + message), line_{line} {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace wearad
