// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace reft {

// Base of every error the simulator raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataFormatError : public Error {
public:
    using Error::Error;
};

class PartitionError : public Error {
public:
    using Error::Error;
};

// FedAvg can only average models that share one architecture.
class ArchitectureMismatchError : public Error {
public:
    using Error::Error;
};

// Raised when a loss turns NaN/Inf during training or distillation.
class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace reft
