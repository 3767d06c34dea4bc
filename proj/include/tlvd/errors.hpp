#pragma once

#include <stdexcept>
#include <string>

namespace tlvd {

/// Root of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

/// Raised when a document (graph, config, payload) does not match its schema.
class ParseError : public Error {
public:
    using Error::Error;
};

class CycleError : public ParseError {
public:
    using ParseError::ParseError;
};

/// Markov blanket requested through an unoriented edge under the strict policy.
class AmbiguityError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

/// Test double asked for a response it was not scripted with.
class FixtureError : public BackendError {
public:
    using BackendError::BackendError;
};

class RetrievalError : public Error {
public:
    using Error::Error;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public InvariantError {
public:
    using InvariantError::InvariantError;
};

}  // namespace tlvd
