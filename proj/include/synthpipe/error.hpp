#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace synthpipe {

enum class ErrorCode {
    InvalidArgument,
    UnreadableFile,
    SchemaViolation,
    EmptyCorpus,
    OversizedDocument,
    IoFailure,
    EmptyText,
    NoInteriorBoundary,
    UnknownStrategy,
    EmptyDocument,
    EmptyEnsemble,
    ConfigError,
    UnparseableResponse,
    MissingLabels,
    SampleTooLarge,
    InsufficientTokens,
    EpochCapExceeded,
    InsufficientLabeledTokens,
    UnsortedInput,
    KeyMismatch,
    MissingScale,
};

std::string_view to_string(ErrorCode code);

// Every domain failure in the library is raised as a PipelineError; the CLI
// maps it to exit code 1 and a JSON diagnostic.
class PipelineError : public std::runtime_error {
public:
    PipelineError(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw PipelineError(code, message);
}

}  // namespace synthpipe
