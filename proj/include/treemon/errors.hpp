#pragma once

#include <stdexcept>
#include <string>

namespace treemon {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A required denominator (instructions, total fp ops) was zero; the sample
// describes an idle or invalid window and must be dropped by the caller.
class ZeroDenominator : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class NonFiniteInput : public Error {
public:
    using Error::Error;
};

// Aggregation inputs disagree on (job, metric, cycle).
class MixedKey : public Error {
public:
    using Error::Error;
};

// The fault schedule marks this node's measurement agent as failed.
class NodeDown : public Error {
public:
    using Error::Error;
};

class DuplicateKey : public Error {
public:
    using Error::Error;
};

class InvalidRecord : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, long field) : Error(what), field_(field) {}
    long field() const { return field_; }

private:
    long field_;
};

class CorruptLine : public Error {
public:
    CorruptLine(const std::string& what, long line) : Error(what), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

class CapacityExceeded : public Error {
public:
    using Error::Error;
};

// runtime / target falls below one second; no sane sampling interval exists.
class TooShort : public Error {
public:
    using Error::Error;
};

class IoFailure : public Error {
public:
    using Error::Error;
};

} // namespace treemon
