#pragma once

#include <stdexcept>
#include <string>

namespace tsab {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or extent mismatch between tensors (includes unsupported shapes).
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// A scalar argument is outside its allowed range.
struct ParameterError : Error {
    explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// An API precondition was violated (caller bug, not bad data).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Malformed input file; carries row/column context in the message.
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Dataset-level problems: empty sets, degenerate statistics, missing files.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Training produced a non-finite loss; carries the epoch in the message.
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& msg, int epoch_index)
        : Error(msg), epoch(epoch_index) {}
    int epoch;
};

}  // namespace tsab
