#pragma once

#include <stdexcept>
#include <string>

namespace distilts {

// Every error raised by the library carries the module it came from and a
// short machine-readable kind, so the CLI can print a one-line diagnostic
// class ("trace/integrity", "diffcore/dimension", ...).
class Error : public std::runtime_error {
public:
    Error(std::string module, std::string kind, const std::string& what)
        : std::runtime_error(what), module_(std::move(module)), kind_(std::move(kind)) {}

    const std::string& module() const noexcept { return module_; }
    const std::string& kind() const noexcept { return kind_; }
    std::string diagnostic_class() const { return module_ + "/" + kind_; }

private:
    std::string module_;
    std::string kind_;
};

class DimensionError : public Error {
public:
    DimensionError(std::string module, const std::string& what)
        : Error(std::move(module), "dimension", what) {}
};

class ContractError : public Error {
public:
    ContractError(std::string module, const std::string& what)
        : Error(std::move(module), "contract", what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("diffcore", "non-finite", what) {}
};

class ConfigError : public Error {
public:
    ConfigError(std::string module, const std::string& what)
        : Error(std::move(module), "config", what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error("data", "parse", what) {}
};

class IoError : public Error {
public:
    IoError(std::string module, const std::string& what)
        : Error(std::move(module), "io", what) {}
};

// Trace failures are split so callers (and trace-validate) can tell a missing
// file from a size disagreement from corrupted bytes.
class TraceError : public Error {
public:
    TraceError(std::string kind, const std::string& what) : Error("teacher", std::move(kind), what) {}
};

class TraceMissingBlobError : public TraceError {
public:
    explicit TraceMissingBlobError(const std::string& what) : TraceError("missing-blob", what) {}
};

class TraceExtentError : public TraceError {
public:
    explicit TraceExtentError(const std::string& what) : TraceError("extent-mismatch", what) {}
};

class TraceIntegrityError : public TraceError {
public:
    explicit TraceIntegrityError(const std::string& what) : TraceError("integrity", what) {}
};

class TraceValidationError : public TraceError {
public:
    explicit TraceValidationError(const std::string& what) : TraceError("validation", what) {}
};

class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& what) : Error("trainer", "divergence", what) {}
};

class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& what) : Error("trainer", "checkpoint", what) {}
};

}  // namespace distilts
