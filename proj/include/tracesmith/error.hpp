#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tracesmith {

enum class ErrorKind {
    // trace-model
    EmptySelector,
    MalformedTrace,
    // recorder-ingest
    MalformedRecording,
    // dom-snapshot
    UnparsableSnapshot,
    UnsupportedSelector,
    // element-signer
    ElementNotFound,
    NotUnique,
    ConfigWriteFailed,
    // sop-engine
    PreconditionViolated,
    MissingTag,
    BadParamJson,
    EmptySteps,
    NoNavigationStep,
    UnresolvedPlaceholder,
    UnusedParam,
    // consistency-engine
    EmptyTrace,
    DegenerateStep,
    DegenerateEmbedding,
    UnparsableScore,
    EmptyGoldenSet,
    EmptyDataset,
    SingleClassDataset,
    InvalidConfig,
    // provider-gateway
    ProviderError,
    Timeout,
    RemoteError,
    DimensionMismatch,
    MissingCassette,
    CassetteWriteFailed,
    // exec-sim
    ElementUnresolvable,
    NoTransition,
    BadNavigation,
    TraceTooShort,
    InvalidSite,
    // generic
    Io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::EmptySelector: return "EmptySelector";
    case ErrorKind::MalformedTrace: return "MalformedTrace";
    case ErrorKind::MalformedRecording: return "MalformedRecording";
    case ErrorKind::UnparsableSnapshot: return "UnparsableSnapshot";
    case ErrorKind::UnsupportedSelector: return "UnsupportedSelector";
    case ErrorKind::ElementNotFound: return "ElementNotFound";
    case ErrorKind::NotUnique: return "NotUnique";
    case ErrorKind::ConfigWriteFailed: return "ConfigWriteFailed";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::MissingTag: return "MissingTag";
    case ErrorKind::BadParamJson: return "BadParamJson";
    case ErrorKind::EmptySteps: return "EmptySteps";
    case ErrorKind::NoNavigationStep: return "NoNavigationStep";
    case ErrorKind::UnresolvedPlaceholder: return "UnresolvedPlaceholder";
    case ErrorKind::UnusedParam: return "UnusedParam";
    case ErrorKind::EmptyTrace: return "EmptyTrace";
    case ErrorKind::DegenerateStep: return "DegenerateStep";
    case ErrorKind::DegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorKind::UnparsableScore: return "UnparsableScore";
    case ErrorKind::EmptyGoldenSet: return "EmptyGoldenSet";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::SingleClassDataset: return "SingleClassDataset";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ProviderError: return "ProviderError";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::RemoteError: return "RemoteError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::MissingCassette: return "MissingCassette";
    case ErrorKind::CassetteWriteFailed: return "CassetteWriteFailed";
    case ErrorKind::ElementUnresolvable: return "ElementUnresolvable";
    case ErrorKind::NoTransition: return "NoTransition";
    case ErrorKind::BadNavigation: return "BadNavigation";
    case ErrorKind::TraceTooShort: return "TraceTooShort";
    case ErrorKind::InvalidSite: return "InvalidSite";
    case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind), detail_(detail) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

}  // namespace tracesmith
