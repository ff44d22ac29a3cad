#pragma once

#include <stdexcept>
#include <string>

namespace gmnet {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// usage/data/config/format/io -> 2, numeric -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/operand shapes do not line up.
struct DimensionError : Error {
    using Error::Error;
};

// Bad construction-time settings: duplicate parameter names, missing
// weights, invalid hyperparameters.
struct ConfigError : Error {
    using Error::Error;
};

// Bad runtime data: out-of-range token ids, mismatched corpora.
struct DataError : Error {
    using Error::Error;
};

// Malformed serialized artifact (checkpoint, feature file, caption file).
struct FormatError : Error {
    using Error::Error;
};

// Caller misuse of an API or command line.
struct UsageError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

} // namespace gmnet
