#pragma once

#include <stdexcept>
#include <string>

namespace bioenv {

/// Bad inputs: out-of-range values, malformed requests, broken preconditions.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem / serialization failures.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training aborted (non-finite loss, degenerate split, ...).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace bioenv
