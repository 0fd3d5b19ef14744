#pragma once

#include <stdexcept>
#include <string>

namespace svgan {

// Bad shapes, misaligned operands, out-of-range labels.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Rejected configs, malformed user input. CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values, diverged training. CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File format and filesystem failures.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Misuse of the computation graph (e.g. backward called twice).
class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace svgan
