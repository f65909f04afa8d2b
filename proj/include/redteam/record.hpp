#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "redteam/backends.hpp"
#include "redteam/error.hpp"

namespace redteam {

// DPF: decode/parse failure (or blocked); PR: partial reconstruction;
// RAR: refusal after reconstruction; OTH: anything else.
enum class FailureMode { DPF, PR, RAR, OTH };

inline constexpr std::array<FailureMode, 4> kFailureModes = {FailureMode::DPF, FailureMode::PR, FailureMode::RAR,
                                                             FailureMode::OTH};

constexpr std::string_view to_string(FailureMode m) {
    switch (m) {
        case FailureMode::DPF: return "DPF";
        case FailureMode::PR: return "PR";
        case FailureMode::RAR: return "RAR";
        case FailureMode::OTH: return "OTH";
    }
    return "OTH";
}

inline std::optional<FailureMode> parse_failure_mode(std::string_view s) {
    for (auto m : kFailureModes) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

struct EvaluationRecord {
    std::string prompt_id;
    std::string category;
    std::string method;
    std::string original;
    std::string transformed;
    std::string response;
    CompletionStatus status = CompletionStatus::Ok;
    int bypass = 0;
    int reconstruction = 0;
    int execution = 0;
    double similarity = 0.0;
    std::optional<FailureMode> failure_mode;
    std::string timestamp;
    std::string model_version;
    int attempt_count = 0;
    double latency_ms = 0.0;
    std::string config_fingerprint;
    std::string error;  // transport, provider or generation message, if any

    // Records that never got a model answer (transport failures after all
    // retries) are kept in the log but excluded from every rate.
    bool scored() const noexcept {
        return status == CompletionStatus::Ok || status == CompletionStatus::BlockedAtInput;
    }

    bool stages_monotone() const noexcept {
        return execution <= reconstruction && reconstruction <= bypass;
    }

    friend bool operator==(const EvaluationRecord&, const EvaluationRecord&) = default;
};

inline nlohmann::json to_json(const EvaluationRecord& r) {
    nlohmann::json j = {
        {"prompt_id", r.prompt_id},
        {"category", r.category},
        {"method", r.method},
        {"original", r.original},
        {"transformed", r.transformed},
        {"response", r.response},
        {"status", to_string(r.status)},
        {"bypass", r.bypass},
        {"reconstruction", r.reconstruction},
        {"execution", r.execution},
        {"similarity", r.similarity},
        {"failure_mode", r.failure_mode ? nlohmann::json(to_string(*r.failure_mode)) : nlohmann::json(nullptr)},
        {"timestamp", r.timestamp},
        {"model_version", r.model_version},
        {"attempt_count", r.attempt_count},
        {"latency_ms", r.latency_ms},
        {"config_fingerprint", r.config_fingerprint},
        {"error", r.error},
    };
    return j;
}

// Throws nlohmann::json exceptions or Error(DatasetError) on malformed input.
inline EvaluationRecord record_from_json(const nlohmann::json& j) {
    EvaluationRecord r;
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.category = j.value("category", "");
    r.method = j.value("method", "");
    r.original = j.at("original").get<std::string>();
    r.transformed = j.value("transformed", "");
    r.response = j.value("response", "");
    const auto status = parse_completion_status(j.value("status", "OK"));
    if (!status) fail(ErrorKind::DatasetError, "unknown status in record " + r.prompt_id);
    r.status = *status;
    r.bypass = j.at("bypass").get<int>();
    r.reconstruction = j.at("reconstruction").get<int>();
    r.execution = j.at("execution").get<int>();
    r.similarity = j.value("similarity", 0.0);
    if (j.contains("failure_mode") && !j["failure_mode"].is_null()) {
        r.failure_mode = parse_failure_mode(j["failure_mode"].get<std::string>());
        if (!r.failure_mode) fail(ErrorKind::DatasetError, "unknown failure_mode in record " + r.prompt_id);
    }
    r.timestamp = j.value("timestamp", "");
    r.model_version = j.value("model_version", "");
    r.attempt_count = j.value("attempt_count", 0);
    r.latency_ms = j.value("latency_ms", 0.0);
    r.config_fingerprint = j.value("config_fingerprint", "");
    r.error = j.value("error", "");
    for (int v : {r.bypass, r.reconstruction, r.execution}) {
        if (v != 0 && v != 1) fail(ErrorKind::DatasetError, "stage outcomes must be 0 or 1 in " + r.prompt_id);
    }
    if (!r.stages_monotone()) fail(ErrorKind::DatasetError, "non-monotone stages in record " + r.prompt_id);
    return r;
}

}  // namespace redteam
