#pragma once

#include <stdexcept>
#include <string>

namespace climvol {

// Bad or insufficient input data: precondition violations, malformed files,
// misaligned series. Maps to CLI exit status 2.
class DataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical failure: non-finite recursions, singular systems, optimizer
// divergence. Maps to CLI exit status 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace climvol
