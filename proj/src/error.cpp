#include "synthpipe/error.hpp"

namespace synthpipe {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UnreadableFile: return "UnreadableFile";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::OversizedDocument: return "OversizedDocument";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::NoInteriorBoundary: return "NoInteriorBoundary";
        case ErrorCode::UnknownStrategy: return "UnknownStrategy";
        case ErrorCode::EmptyDocument: return "EmptyDocument";
        case ErrorCode::EmptyEnsemble: return "EmptyEnsemble";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::UnparseableResponse: return "UnparseableResponse";
        case ErrorCode::MissingLabels: return "MissingLabels";
        case ErrorCode::SampleTooLarge: return "SampleTooLarge";
        case ErrorCode::InsufficientTokens: return "InsufficientTokens";
        case ErrorCode::EpochCapExceeded: return "EpochCapExceeded";
        case ErrorCode::InsufficientLabeledTokens: return "InsufficientLabeledTokens";
        case ErrorCode::UnsortedInput: return "UnsortedInput";
        case ErrorCode::KeyMismatch: return "KeyMismatch";
        case ErrorCode::MissingScale: return "MissingScale";
    }
    return "Unknown";
}

}  // namespace synthpipe
