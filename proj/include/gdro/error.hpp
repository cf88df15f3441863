#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gdro {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value object was constructed with a violated invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class InvalidMarginals : public Error {
public:
    using Error::Error;
};

/// Fewer than two groups; the q-player step size is undefined.
class DegenerateGroups : public Error {
public:
    using Error::Error;
};

class ObservationMismatch : public Error {
public:
    using Error::Error;
};

class GradientBoundViolation : public Error {
public:
    using Error::Error;
};

class ScheduleExhausted : public Error {
public:
    using Error::Error;
};

class MalformedRow : public Error {
public:
    MalformedRow(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyGroup : public Error {
public:
    using Error::Error;
};

class TooFewGroups : public Error {
public:
    using Error::Error;
};

class DiagnosticsDisabled : public Error {
public:
    using Error::Error;
};

/// Bad configuration; `key()` names the offending setting.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Wraps any failure raised while playing a round of the game.
class RoundError : public Error {
public:
    RoundError(std::int64_t round, const std::string& what)
        : Error("round " + std::to_string(round) + ": " + what), round_(round) {}
    std::int64_t round() const noexcept { return round_; }

private:
    std::int64_t round_;
};

} // namespace gdro
