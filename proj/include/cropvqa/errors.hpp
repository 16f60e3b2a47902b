#pragma once

#include <stdexcept>
#include <string>

namespace cropvqa {

/// Root of every exception thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// geometry
class BoundsError : public Error {
public:
    using Error::Error;
};

class DegenerateRectError : public Error {
public:
    using Error::Error;
};

// strategies
class NotApplicableError : public Error {
public:
    using Error::Error;
};

class DegenerateSaliencyError : public Error {
public:
    using Error::Error;
};

// backends
class BackendError : public Error {
public:
    using Error::Error;
};

/// Connection refused, reset, or otherwise failed before a response arrived.
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

/// The server answered, but not in the agreed wire format.
class ProtocolError : public BackendError {
public:
    using BackendError::BackendError;
};

// datasets / metrics / harness
class IngestError : public Error {
public:
    using Error::Error;
};

class MetricError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace cropvqa
