#pragma once

#include <stdexcept>
#include <string>

namespace confcal {

// Root of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Transport-level failures raised by the gateway.
class GatewayError : public Error {
public:
    using Error::Error;
};

class AuthError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

class TransportError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

class MalformedResponse : public GatewayError {
public:
    using GatewayError::GatewayError;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class CorpusError : public Error {
public:
    using Error::Error;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

class StyleViolation : public Error {
public:
    using Error::Error;
};

class NoCorrectCluster : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class AllParseFailures : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Pipeline stage failure; message carries the stage name and cause.
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& cause)
        : Error("stage '" + stage + "': " + cause), stage_(stage) {}

    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace confcal
