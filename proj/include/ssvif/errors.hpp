#pragma once

#include <stdexcept>
#include <string>

namespace ssvif {

/// Base class for all ssvif errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape/axis mismatches between tensors or invalid axes.
struct DimensionError : Error {
    using Error::Error;
};

/// Violated API precondition (non-scalar backward, bad crop size, ...).
struct ContractError : Error {
    using Error::Error;
};

/// Malformed file content (codecs, checkpoints). Message carries the offset.
struct ParseError : Error {
    using Error::Error;
};

/// Bad configuration (unknown key, type mismatch, invalid enum value).
struct ConfigError : Error {
    using Error::Error;
};

/// Filesystem / dataset layout problems.
struct IoError : Error {
    using Error::Error;
};

/// NaN/Inf encountered during training.
struct DivergenceError : Error {
    using Error::Error;
};

} // namespace ssvif
