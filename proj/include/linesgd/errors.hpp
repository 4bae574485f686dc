#pragma once
#include <stdexcept>
#include <string>

namespace linesgd {

// Invalid arguments, configuration or preconditions. CLI exit code 1.
class SpecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Requested data not present in an artifact (e.g. no per-sample matrix).
class CapabilityError : public SpecError {
public:
    using SpecError::SpecError;
};

// Non-finite values or failed numeric operations. CLI exit code 2.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files. CLI exit code 2.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stored artifacts inconsistent with each other or with their config. CLI exit code 2.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace linesgd
