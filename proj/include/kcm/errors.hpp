#pragma once

#include <stdexcept>
#include <string>

namespace kcm {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension/shape disagreement between tensor operands.
struct ShapeError : Error {
    using Error::Error;
};

// Violated precondition of an operation (bad argument, detached loss, ...).
struct ContractError : Error {
    using Error::Error;
};

// Malformed file content (checkpoint, CIFAR binary, CSV).
struct FormatError : Error {
    using Error::Error;
};

// Bad configuration: unknown key, missing section, unparseable value.
struct ConfigError : Error {
    using Error::Error;
};

// Request exceeds a hard resource ceiling (e.g. exhaustive enumeration size).
struct CapacityError : Error {
    using Error::Error;
};

// Training aborted mid-run; message carries the step index and diagnostics.
struct TrainError : Error {
    using Error::Error;
};

}  // namespace kcm
