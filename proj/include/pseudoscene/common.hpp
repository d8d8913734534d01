#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pseudoscene {

inline constexpr std::string_view kToolName = "pseudoscene";
inline constexpr std::string_view kToolVersion = "0.1.0";

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violation on an in-process API call.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent data file content.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure (open, read, write).
class IoError : public Error {
public:
    using Error::Error;
};

/// Classifier-oracle failure; message carries the canonical query key.
class OracleError : public Error {
public:
    using Error::Error;
};

/// Invalid option or configuration value. CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace pseudoscene
