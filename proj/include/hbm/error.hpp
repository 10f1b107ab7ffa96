#pragma once

#include <stdexcept>
#include <string>

namespace hbm {

/// Malformed input data, metadata or configuration. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A sampler or model evaluation could not produce a usable result
/// (tempering collapse, step-out failure, no finite failure time).
/// Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hbm
