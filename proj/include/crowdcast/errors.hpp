#pragma once

#include <stdexcept>
#include <string>

namespace crowdcast {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error {
    ParseError(long line, const std::string& what)
        : Error("parse error at line " + std::to_string(line) + ": " + what), line(line) {}
    long line;
};

struct EmptyFile : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct SchemaError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

struct NonFiniteValue : Error {
    using Error::Error;
};

struct NotScalarOutput : Error {
    using Error::Error;
};

struct EmptySnapshot : Error {
    using Error::Error;
};

struct EmptyScene : Error {
    using Error::Error;
};

struct EmptyDataset : Error {
    using Error::Error;
};

struct TooFewTrajectories : Error {
    using Error::Error;
};

}  // namespace crowdcast
