#pragma once

#include <stdexcept>
#include <string>

namespace flamekit {

/// Malformed or inconsistent input data (CSV schema violations, bad configs).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem failure: file missing, unreadable, or unwritable.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or dimension mismatch between values that must agree.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Failure while fitting a model (non-finite values, insufficient data).
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unreadable, truncated, or unsupported model/ensemble files.
class SerializationError : public std::runtime_error {
public:
    explicit SerializationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Cross-artifact consistency violations (fingerprints, partition identities).
class ConsistencyError : public std::runtime_error {
public:
    explicit ConsistencyError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace flamekit
