#pragma once

#include <stdexcept>
#include <string>

namespace protopath {

/// Base class for every error raised by the library. The CLI maps
/// `InputError` (and subclasses) to exit code 2 and everything else to 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
};

/// Shape or dimension mismatch.
class DimensionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "dimension_error"; }
};

/// Out-of-range index.
class IndexError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "index_error"; }
};

/// Invalid parameter value (probabilities, thresholds, ...).
class ParameterError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "parameter_error"; }
};

/// A documented precondition or protocol rule was violated.
class ContractError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "contract_error"; }
};

/// Graph structure problems (cycles, missing nodes).
class StructuralError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "structural_error"; }
};

/// Prototype initialization could not produce K distinct centroids.
class InitializationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "initialization_error"; }
};

/// A statistic is undefined on the given data (no comparable pairs, too few
/// distinct values, empty group).
class MetricError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "metric_error"; }
};

/// Bad user-supplied input: missing files, malformed records, misaligned data.
class InputError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "input_error"; }
};

class ParseError : public InputError {
public:
    ParseError(const std::string& what, std::size_t line)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }
    const char* kind() const noexcept override { return "parse_error"; }

private:
    std::size_t line_;
};

class ConfigError : public InputError {
public:
    using InputError::InputError;
    const char* kind() const noexcept override { return "config_error"; }
};

/// Data that does not line up with the graph or cohort it is paired with.
class AlignmentError : public InputError {
public:
    using InputError::InputError;
    const char* kind() const noexcept override { return "alignment_error"; }
};

} // namespace protopath
