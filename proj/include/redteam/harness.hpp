#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "redteam/backends.hpp"
#include "redteam/error.hpp"
#include "redteam/method.hpp"
#include "redteam/record.hpp"
#include "redteam/scoring.hpp"
#include "redteam/util.hpp"

namespace redteam {

inline constexpr std::string_view kToolVersion = "1.0.0";
inline constexpr std::string_view kRecordsFile = "records.jsonl";
inline constexpr std::string_view kManifestFile = "manifest.json";

struct DatasetItem {
    std::string id;
    std::string text;
    std::string category;
};

// JSON Lines of {id, text, category}. Blank lines are ignored; anything else
// malformed is a DatasetError.
inline std::vector<DatasetItem> parse_dataset(std::string_view jsonl) {
    std::vector<DatasetItem> items;
    std::set<std::string, std::less<>> seen;
    std::size_t pos = 0, line_no = 0;
    while (pos < jsonl.size()) {
        auto end = jsonl.find('\n', pos);
        if (end == std::string_view::npos) end = jsonl.size();
        const std::string_view line = jsonl.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        DatasetItem item;
        try {
            const auto j = nlohmann::json::parse(line);
            item.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
            item.text = j.at("text").get<std::string>();
            item.category = j.value("category", "uncategorized");
        } catch (const std::exception& ex) {
            fail(ErrorKind::DatasetError, "dataset line " + std::to_string(line_no) + ": " + ex.what());
        }
        if (split_words(item.text).empty()) {
            fail(ErrorKind::DatasetError, "dataset line " + std::to_string(line_no) + ": empty prompt text");
        }
        if (!seen.insert(item.id).second) fail(ErrorKind::DatasetError, "duplicate prompt id '" + item.id + "'");
        items.push_back(std::move(item));
    }
    if (items.empty()) fail(ErrorKind::DatasetError, "dataset is empty");
    return items;
}

inline std::vector<DatasetItem> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::DatasetError, "cannot read dataset " + path.string());
    return parse_dataset(read_file(path.string()));
}

struct AttemptedResult {
    CompletionResult result;
    int attempts = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

constexpr bool is_retryable(CompletionStatus s) noexcept {
    return s == CompletionStatus::TransportError || s == CompletionStatus::RateLimited;
}

// Retries technical failures only. A refusal is a legitimate answer and is
// never retried. The n-th retry waits delay * 2^(n-1).
template <typename Thunk>
AttemptedResult retry_wrap(Thunk&& attempt, int max_retries, std::chrono::milliseconds delay,
                           const Sleeper& sleep = real_sleep) {
    if (max_retries < 0) fail(ErrorKind::InvalidArgument, "max_retries must be >= 0");
    AttemptedResult out;
    auto wait = delay;
    for (;;) {
        ++out.attempts;
        out.result = attempt();
        if (!is_retryable(out.result.status) || out.attempts > max_retries) return out;
        if (wait.count() > 0) sleep(wait);
        wait *= 2;
    }
}

struct RunSpec {
    std::string dataset_path;
    Method method = make_preset("full");
    BackendDescriptor backend;
    int batch_size = 8;
    int max_retries = 3;
    int retry_delay_ms = 2000;
    std::string run_id = "run";
    std::string seed_note = "deterministic pipeline; only seed-like input is the Vigenere key";
    ScoringConfig scoring;

    void validate() const {
        if (batch_size < 1) fail(ErrorKind::ConfigError, "batch_size must be >= 1");
        if (max_retries < 0) fail(ErrorKind::ConfigError, "max_retries must be >= 0");
        if (retry_delay_ms < 0) fail(ErrorKind::ConfigError, "retry_delay_ms must be >= 0");
        if (run_id.empty()) fail(ErrorKind::ConfigError, "run_id is empty");
        scoring.validate();
    }
};

// Appends records to a JSON Lines file, one writer at a time.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& path, bool truncate = false) : path_(path) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        out_.open(path, truncate ? std::ios::trunc : std::ios::app);
        if (!out_) fail(ErrorKind::LogWriteError, "cannot open " + path.string() + " for writing");
    }

    void append(const EvaluationRecord& r) {
        std::lock_guard lock(mu_);
        out_ << to_json(r).dump() << '\n';
        out_.flush();
        if (!out_) fail(ErrorKind::LogWriteError, "write failed on " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mu_;
};

struct RunContext {
    const TemplateStore* store = &TemplateStore::builtin();
    Sleeper sleep = real_sleep;
    // Records already logged by an interrupted run; their prompt ids are skipped.
    std::vector<EvaluationRecord> resume;
    // When set, each finished batch is appended here as it completes.
    JsonlWriter* progress = nullptr;
};

// One record per dataset item, in dataset order. Each prompt is sent once;
// only transport failures are retried.
inline std::vector<EvaluationRecord> run(const RunSpec& spec, Backend& backend,
                                         const std::vector<DatasetItem>& dataset, const RunContext& ctx = {}) {
    spec.validate();
    if (dataset.empty()) fail(ErrorKind::DatasetError, "dataset is empty");
    std::unordered_map<std::string, const EvaluationRecord*> done;
    for (const auto& r : ctx.resume) done.emplace(r.prompt_id, &r);

    const std::string method = method_name(spec.method);
    const std::string fp = method_fingerprint(spec.method);
    const int concurrency = std::min(spec.batch_size, backend.descriptor().max_concurrency);
    std::vector<EvaluationRecord> records(dataset.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (auto it = done.find(dataset[i].id); it != done.end()) records[i] = *it->second;
        else pending.push_back(i);
    }

    for (std::size_t start = 0; start < pending.size(); start += static_cast<std::size_t>(spec.batch_size)) {
        const std::size_t stop = std::min(pending.size(), start + static_cast<std::size_t>(spec.batch_size));
        std::vector<TransformedQuery> queries(stop - start);
        std::vector<std::string> gen_errors(stop - start);
        for (std::size_t k = start; k < stop; ++k) {
            const DatasetItem& item = dataset[pending[k]];
            try {
                queries[k - start] = transform(item.text, spec.method, *ctx.store);
            } catch (const Error& ex) {
                gen_errors[k - start] = ex.what();
            }
        }
        std::vector<AttemptedResult> results(queries.size());
        parallel_for_index(queries.size(), concurrency, [&](std::size_t k) {
            if (!gen_errors[k].empty()) return;
            results[k] = retry_wrap(
                [&] {
                    try {
                        return backend.complete(queries[k]);
                    } catch (const std::exception& ex) {
                        return CompletionResult::error(CompletionStatus::TransportError, ex.what());
                    }
                },
                spec.max_retries, std::chrono::milliseconds(spec.retry_delay_ms), ctx.sleep);
        });
        for (std::size_t k = start; k < stop; ++k) {
            const DatasetItem& item = dataset[pending[k]];
            const AttemptedResult& res = results[k - start];
            EvaluationRecord r;
            r.prompt_id = item.id;
            r.category = item.category;
            r.method = method;
            r.original = item.text;
            r.transformed = queries[k - start].text;
            r.config_fingerprint = fp;
            r.timestamp = utc_timestamp();
            if (!gen_errors[k - start].empty()) {
                r.status = CompletionStatus::TransportError;
                r.error = gen_errors[k - start];
            } else {
                r.status = res.result.status;
                r.response = res.result.text.value_or("");
                r.model_version = res.result.model_version;
                r.attempt_count = res.attempts;
                r.latency_ms = res.result.latency_ms;
                r.error = res.result.detail;
            }
            score_record(r, spec.scoring);
            if (ctx.progress) ctx.progress->append(r);
            records[pending[k]] = std::move(r);
        }
    }
    return records;
}

inline std::vector<EvaluationRecord> run(const RunSpec& spec, const RunContext& ctx = {},
                                         const EnvLookup& env = process_env) {
    spec.validate();
    const auto dataset = load_dataset(spec.dataset_path);
    auto backend = make_backend(spec.backend, spec.method, *ctx.store, env);
    return run(spec, *backend, dataset, ctx);
}

// ---- logs ----

struct LogReadResult {
    std::vector<EvaluationRecord> records;
    std::size_t total_lines = 0;
    std::size_t skipped_lines = 0;
    std::vector<std::string> warnings;

    double skipped_fraction() const {
        return total_lines == 0 ? 0.0 : static_cast<double>(skipped_lines) / static_cast<double>(total_lines);
    }
};

inline LogReadResult parse_log(std::string_view jsonl) {
    LogReadResult out;
    std::size_t pos = 0, line_no = 0;
    while (pos < jsonl.size()) {
        auto end = jsonl.find('\n', pos);
        if (end == std::string_view::npos) end = jsonl.size();
        const std::string_view line = jsonl.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        ++out.total_lines;
        try {
            out.records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& ex) {
            ++out.skipped_lines;
            out.warnings.push_back("line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return out;
}

// Accepts a run directory or a records file.
inline LogReadResult read_log(const std::filesystem::path& path) {
    std::filesystem::path file = path;
    if (std::filesystem::is_directory(path)) file /= kRecordsFile;
    std::ifstream in(file, std::ios::binary);
    if (!in) fail(ErrorKind::DatasetError, "cannot read log " + file.string());
    return parse_log(read_file(file.string()));
}

inline nlohmann::json summary_json(const MetricsSummary& s) {
    nlohmann::json dist = nlohmann::json::object();
    nlohmann::json counts = nlohmann::json::object();
    for (auto m : kFailureModes) {
        dist[std::string(to_string(m))] = s.failure_distribution.at(m);
        counts[std::string(to_string(m))] = s.failure_counts.at(m);
    }
    return {{"n", s.n},
            {"excluded", s.excluded},
            {"bypass_rate", s.bypass_rate},
            {"recon_rate", s.recon_rate},
            {"exec_rate", s.exec_rate},
            {"failed", s.failed},
            {"failure_counts", counts},
            {"failure_distribution", dist}};
}

inline nlohmann::json run_spec_json(const RunSpec& spec) {
    nlohmann::json method = {{"name", method_name(spec.method)},
                             {"label", method_label(spec.method)},
                             {"fingerprint", method_fingerprint(spec.method)}};
    if (const auto* cfg = std::get_if<TransformConfig>(&spec.method)) {
        method["canonical"] = cfg->canonical();
        method["template"] = cfg->directive_template;
    } else {
        method["canonical"] = std::get<BaselineSpec>(spec.method).canonical();
    }
    const auto& b = spec.backend;
    return {{"run_id", spec.run_id},
            {"dataset", spec.dataset_path},
            {"method", method},
            {"backend",
             {{"name", b.name},
              {"kind", to_string(b.kind)},
              {"endpoint", b.endpoint},
              {"model_id", b.model_id},
              {"auth_env", b.auth_env},
              {"timeout_ms", b.timeout_ms},
              {"max_concurrency", b.max_concurrency}}},
            {"batch_size", spec.batch_size},
            {"max_retries", spec.max_retries},
            {"retry_delay_ms", spec.retry_delay_ms},
            {"seed_note", spec.seed_note},
            {"scoring",
             {{"mode", spec.scoring.mode == ScoringMode::Oracle ? "ORACLE" : "HEURISTIC"},
              {"epsilon", spec.scoring.epsilon},
              {"gamma", spec.scoring.gamma},
              {"dpf_floor", spec.scoring.dpf_floor},
              {"exec_floor_tokens", spec.scoring.exec_floor_tokens}}}};
}

struct LogManifest {
    std::filesystem::path records_path;
    std::filesystem::path manifest_path;
    nlohmann::json manifest;
};

// Rewrites <run_dir>/records.jsonl and <run_dir>/manifest.json. `run_info`
// (spec, start/end times) is copied into the manifest verbatim.
inline LogManifest write_log(const std::vector<EvaluationRecord>& records, const std::filesystem::path& run_dir,
                             const nlohmann::json& run_info = nlohmann::json::object()) {
    std::error_code ec;
    std::filesystem::create_directories(run_dir, ec);
    if (ec || !std::filesystem::is_directory(run_dir)) {
        fail(ErrorKind::LogWriteError, "cannot create run directory " + run_dir.string());
    }
    LogManifest out{run_dir / kRecordsFile, run_dir / kManifestFile, {}};
    {
        std::ofstream f(out.records_path, std::ios::trunc | std::ios::binary);
        if (!f) fail(ErrorKind::LogWriteError, "cannot write " + out.records_path.string());
        for (const auto& r : records) f << to_json(r).dump() << '\n';
        f.close();
        if (!f) fail(ErrorKind::LogWriteError, "write failed on " + out.records_path.string());
    }

    std::set<std::string> versions;
    for (const auto& r : records) {
        if (!r.model_version.empty()) versions.insert(r.model_version);
    }
    nlohmann::json m = run_info;
    m["record_count"] = records.size();
    m["model_versions"] = versions;
    m["written_at"] = utc_timestamp();
    try {
        m["aggregate"] = summary_json(aggregate(records));
    } catch (const Error&) {
        m["aggregate"] = nullptr;
    }
    m["environment"] = {{"tool_version", kToolVersion},
                        {"compiler", __VERSION__},
                        {"cplusplus", __cplusplus}};
    {
        std::ofstream f(out.manifest_path, std::ios::trunc | std::ios::binary);
        if (!f) fail(ErrorKind::LogWriteError, "cannot write " + out.manifest_path.string());
        f << m.dump(2) << '\n';
        f.close();
        if (!f) fail(ErrorKind::LogWriteError, "write failed on " + out.manifest_path.string());
    }
    out.manifest = std::move(m);
    return out;
}

}  // namespace redteam
