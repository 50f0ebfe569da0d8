#pragma once

#include <stdexcept>
#include <string>

namespace promptsteer {

// Each error class maps onto one CLI exit code (see cli.hpp).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct UsageError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };
struct LengthError : Error { using Error::Error; };
struct MathError : Error { using Error::Error; };
struct CompatibilityError : Error { using Error::Error; };
struct ContractViolation : Error { using Error::Error; };

}  // namespace promptsteer
