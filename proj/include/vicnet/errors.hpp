#pragma once

#include <stdexcept>
#include <string>

namespace vicnet {

// Exit-code buckets used by the CLI: 0 ok, 2 config, 3 data, 4 numeric.
enum class ErrorCode { config = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// Tensor/layer shape inconsistencies; message names the offending layer.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(ErrorCode::numeric, msg) {}
};

// NaN/Inf encountered, singular systems, non-positive IC values.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(ErrorCode::numeric, msg) {}
};

// Backward called without a matching train-mode forward, and similar misuse.
class StateError : public Error {
public:
    explicit StateError(const std::string& msg) : Error(ErrorCode::numeric, msg) {}
};

// Malformed or degenerate input data (empty sets, non-monotone time, sigma = 0).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(ErrorCode::data, msg) {}
};

// Profile too small or too large for the downsample/pad window.
class WindowError : public Error {
public:
    explicit WindowError(const std::string& msg) : Error(ErrorCode::data, msg) {}
};

// Requested range not covered by the data.
class RangeError : public Error {
public:
    explicit RangeError(const std::string& msg) : Error(ErrorCode::data, msg) {}
};

// Invalid run configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(ErrorCode::config, msg) {}
};

// Checkpoint surgery on mismatched architectures or unknown layer names.
class TransferError : public Error {
public:
    explicit TransferError(const std::string& msg) : Error(ErrorCode::config, msg) {}
};

// Simulated protocol infeasible for the given module model.
class SimError : public Error {
public:
    explicit SimError(const std::string& msg) : Error(ErrorCode::data, msg) {}
};

} // namespace vicnet
