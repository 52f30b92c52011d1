#pragma once

#include <stdexcept>
#include <string>

namespace wscos {

// Precondition or invariant breach by the caller.
struct ContractViolation : std::invalid_argument {
    explicit ContractViolation(const std::string& msg) : std::invalid_argument(msg) {}
};

// A mask provider failed to produce a mask; the pipeline treats the view as missing.
struct ProviderError : std::runtime_error {
    explicit ProviderError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NotFoundError : ProviderError {
    explicit NotFoundError(const std::string& msg) : ProviderError(msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PipelineError : std::runtime_error {
    explicit PipelineError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wscos
