#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace redteam {

enum class ErrorKind {
    EmptyPrompt,
    MalformedPartition,
    InvalidKey,
    InvalidArgument,
    TemplateNotFound,
    TemplateMalformed,
    DecodeStructureError,
    SeparatorCollision,
    BackendConfigError,
    DatasetError,
    LogWriteError,
    ClassifierMisuse,
    EmptyRun,
    ConfigError,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::EmptyPrompt: return "EmptyPrompt";
        case ErrorKind::MalformedPartition: return "MalformedPartition";
        case ErrorKind::InvalidKey: return "InvalidKey";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::TemplateNotFound: return "TemplateNotFound";
        case ErrorKind::TemplateMalformed: return "TemplateMalformed";
        case ErrorKind::DecodeStructureError: return "DecodeStructureError";
        case ErrorKind::SeparatorCollision: return "SeparatorCollision";
        case ErrorKind::BackendConfigError: return "BackendConfigError";
        case ErrorKind::DatasetError: return "DatasetError";
        case ErrorKind::LogWriteError: return "LogWriteError";
        case ErrorKind::ClassifierMisuse: return "ClassifierMisuse";
        case ErrorKind::EmptyRun: return "EmptyRun";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

// Every failure surfaced by the library carries a kind so callers (and the
// CLI exit-code mapping) can dispatch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace redteam
