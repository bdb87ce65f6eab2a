#pragma once

#include <stdexcept>
#include <string>

namespace vlcl {

/// Invalid configuration, flags or inputs detected before work starts.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Data that cannot satisfy a request (too few classes, images, ...).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure during training (non-finite loss or gradient).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vlcl
