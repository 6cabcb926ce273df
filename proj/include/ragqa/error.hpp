#pragma once

#include <stdexcept>
#include <string>

namespace ragqa {

// Base for every error raised by the library. Callers that only need a message
// can catch this; the CLI maps subclasses onto structured exit records.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

class CorpusError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "corpus"; }
};

class RetrievalError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "retrieval"; }
};

class GenerationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "generation"; }
};

class DatasetError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "dataset"; }
};

class EvaluationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "evaluation"; }
};

// Raised when an artifact (index, dataset, report) was built from a different
// chunked corpus than the one currently loaded.
class FingerprintMismatch : public Error {
public:
    FingerprintMismatch(const std::string& what, std::string expected, std::string actual)
        : Error(what + ": corpus fingerprint mismatch (expected " + expected + ", got " + actual + ")"),
          expected_(std::move(expected)), actual_(std::move(actual)) {}
    const char* kind() const noexcept override { return "fingerprint_mismatch"; }
    const std::string& expected() const noexcept { return expected_; }
    const std::string& actual() const noexcept { return actual_; }

private:
    std::string expected_;
    std::string actual_;
};

}  // namespace ragqa
