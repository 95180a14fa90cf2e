#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tabitd {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input record; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Input does not match the declared column layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A raw label string with no entry in the label map.
class UnmappedLabelError : public Error {
public:
    explicit UnmappedLabelError(const std::string& label)
        : Error("unmapped label: \"" + label + "\""), label_(label) {}

private:
    std::string label_;
};

/// Invalid configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operation received zero records where at least one is required.
class EmptyDatasetError : public Error {
public:
    using Error::Error;
};

/// Tensor shape disagreement.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced during computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Operation used outside its contract (e.g. inference on an untrained model).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Model/dataset schema fingerprints differ.
class FingerprintMismatchError : public Error {
public:
    using Error::Error;
};

/// Training loss became non-finite.
class TrainingDivergedError : public Error {
public:
    using Error::Error;
};

} // namespace tabitd
