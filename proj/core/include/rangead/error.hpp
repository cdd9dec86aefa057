#pragma once

#include <stdexcept>
#include <string>

namespace rangead {

enum class ErrorKind {
    config,   // invalid parameters or incompatible artifacts
    data,     // malformed or unusable input data
    shape,    // dimension mismatch between model, data, or ranges
    numeric,  // non-finite values produced during computation
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

/// Re-throws an error of the same kind with `prefix` prepended to the message.
[[noreturn]] void rethrow_with_prefix(const Error& err, const std::string& prefix);

}  // namespace rangead
