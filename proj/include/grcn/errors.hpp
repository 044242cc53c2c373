#pragma once

#include <stdexcept>
#include <string>

namespace grcn {

// Error classes map onto CLI exit codes: validation/config -> 2,
// numeric failures -> 3, I/O failures -> 4.
enum class ErrorKind {
    validation,
    shape,
    domain,
    tape,
    sampling,
    numeric,
    io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& m) : Error(ErrorKind::validation, m) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& m) : Error(ErrorKind::shape, m) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& m) : Error(ErrorKind::domain, m) {}
};

class TapeError : public Error {
public:
    explicit TapeError(const std::string& m) : Error(ErrorKind::tape, m) {}
};

class SamplingError : public Error {
public:
    explicit SamplingError(const std::string& m) : Error(ErrorKind::sampling, m) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& m) : Error(ErrorKind::numeric, m) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& m) : Error(ErrorKind::io, m) {}
};

}  // namespace grcn
