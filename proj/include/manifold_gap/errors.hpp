#pragma once

#include <stdexcept>
#include <string>

namespace manifold_gap {

/// Base of every error raised by the library.
///
/// `is_mathematical()` separates failures of the mathematics (a gap condition,
/// a contraction, a bound) from usage errors; the command-line front end maps
/// the former to exit code 1 and the latter to exit code 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, bool mathematical = true)
        : std::runtime_error(what), mathematical_(mathematical) {}

    bool is_mathematical() const noexcept { return mathematical_; }

private:
    bool mathematical_;
};

class PoleError : public Error {
public:
    using Error::Error;
};

class DegenerateBasisError : public Error {
public:
    using Error::Error;
};

class ContourTooCloseError : public Error {
public:
    using Error::Error;
};

class CertificateViolation : public Error {
public:
    using Error::Error;
};

class BlowupError : public Error {
public:
    using Error::Error;
};

class TailBudgetError : public Error {
public:
    using Error::Error;
};

class NoContractionError : public Error {
public:
    using Error::Error;
};

class GapConditionError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& what) : Error(what, false) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, false) {}
};

}  // namespace manifold_gap
