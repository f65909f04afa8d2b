#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "redteam/error.hpp"
#include "redteam/method.hpp"
#include "redteam/util.hpp"

namespace redteam {

enum class BackendKind { HttpApi, Scripted, FaithfulDecoder, Refuser };

constexpr std::string_view to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::HttpApi: return "HTTP_API";
        case BackendKind::Scripted: return "SCRIPTED";
        case BackendKind::FaithfulDecoder: return "FAITHFUL_DECODER";
        case BackendKind::Refuser: return "REFUSER";
    }
    return "UNKNOWN";
}

inline std::optional<BackendKind> parse_backend_kind(std::string_view s) {
    for (auto k : {BackendKind::HttpApi, BackendKind::Scripted, BackendKind::FaithfulDecoder, BackendKind::Refuser}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

enum class CompletionStatus { Ok, BlockedAtInput, TransportError, RateLimited };

constexpr std::string_view to_string(CompletionStatus s) {
    switch (s) {
        case CompletionStatus::Ok: return "OK";
        case CompletionStatus::BlockedAtInput: return "BLOCKED_AT_INPUT";
        case CompletionStatus::TransportError: return "TRANSPORT_ERROR";
        case CompletionStatus::RateLimited: return "RATE_LIMITED";
    }
    return "UNKNOWN";
}

inline std::optional<CompletionStatus> parse_completion_status(std::string_view s) {
    for (auto st : {CompletionStatus::Ok, CompletionStatus::BlockedAtInput, CompletionStatus::TransportError,
                    CompletionStatus::RateLimited}) {
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

struct BackendDescriptor {
    std::string name;
    BackendKind kind = BackendKind::FaithfulDecoder;
    std::string endpoint;     // HTTP only
    std::string model_id;     // HTTP only
    std::string auth_env;     // name of the variable holding the bearer token; empty = no auth
    std::string script_path;  // SCRIPTED only
    int timeout_ms = 60000;
    int max_concurrency = 4;

    void validate() const {
        if (max_concurrency < 1 || max_concurrency > 1024) {
            fail(ErrorKind::BackendConfigError, "max_concurrency must be in [1, 1024]");
        }
        if (timeout_ms <= 0) fail(ErrorKind::BackendConfigError, "timeout_ms must be positive");
        if (kind == BackendKind::HttpApi && (endpoint.empty() || model_id.empty())) {
            fail(ErrorKind::BackendConfigError, "HTTP backend '" + name + "' needs endpoint and model_id");
        }
        if (kind == BackendKind::Scripted && script_path.empty()) {
            fail(ErrorKind::BackendConfigError, "scripted backend '" + name + "' needs script_path");
        }
    }
};

struct CompletionResult {
    std::optional<std::string> text;  // set whenever status == Ok
    CompletionStatus status = CompletionStatus::TransportError;
    double latency_ms = 0.0;
    std::string model_version;
    std::string detail;  // transport / provider error message, if any

    static CompletionResult ok(std::string text, std::string model_version) {
        return {std::move(text), CompletionStatus::Ok, 0.0, std::move(model_version), {}};
    }
    static CompletionResult error(CompletionStatus status, std::string detail, std::string model_version = {}) {
        return {std::nullopt, status, 0.0, std::move(model_version), std::move(detail)};
    }
};

class Backend {
public:
    explicit Backend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {}
    virtual ~Backend() = default;
    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    // Must be callable concurrently up to descriptor().max_concurrency times.
    virtual CompletionResult complete(const TransformedQuery& query) = 0;

    const BackendDescriptor& descriptor() const noexcept { return descriptor_; }

private:
    BackendDescriptor descriptor_;
};

inline constexpr std::string_view kCanonicalRefusal = "I'm sorry, but I can't help with that.";
inline constexpr std::string_view kDecodeFailureReply = "I could not decode the message.";

// Fixed completion the offline decoder appends after its reconstruction; long
// enough to clear the default execution floor.
inline constexpr std::string_view kExecutionStub =
    "EXECUTION: Here is a complete answer to the rebuilt request. Step one: gather everything the task "
    "needs and check each item against the request. Step two: carry out the main work in order, confirming "
    "each result before moving on. Step three: review the outcome, fill any gaps, and summarize what was "
    "done so the result is ready to use.";

inline std::string reconstruction_block(std::string_view recovered) {
    return std::string(kReconOpen) + std::string(recovered) + std::string(kReconClose);
}

// Offline stand-in that decodes every query programmatically and then
// "executes" it with a fixed stub.
class FaithfulDecoderBackend final : public Backend {
public:
    FaithfulDecoderBackend(BackendDescriptor d, Method method, const TemplateStore& store)
        : Backend(std::move(d)), method_(std::move(method)), store_(store) {}

    CompletionResult complete(const TransformedQuery& query) override {
        auto recovered = invert(query.text, method_, store_);
        if (!recovered) return CompletionResult::ok(std::string(kDecodeFailureReply), "faithful-decoder/1");
        return CompletionResult::ok(reconstruction_block(*recovered) + "\n" + std::string(kExecutionStub),
                                    "faithful-decoder/1");
    }

private:
    Method method_;
    const TemplateStore& store_;
};

// Offline stand-in that reconstructs faithfully and then refuses.
class RefuserBackend final : public Backend {
public:
    RefuserBackend(BackendDescriptor d, Method method, const TemplateStore& store)
        : Backend(std::move(d)), method_(std::move(method)), store_(store) {}

    CompletionResult complete(const TransformedQuery& query) override {
        auto recovered = invert(query.text, method_, store_);
        if (!recovered) return CompletionResult::ok(std::string(kCanonicalRefusal), "refuser/1");
        return CompletionResult::ok(reconstruction_block(*recovered) + "\n" + std::string(kCanonicalRefusal),
                                    "refuser/1");
    }

private:
    Method method_;
    const TemplateStore& store_;
};

struct ScriptedEntry {
    std::string response_text;
    CompletionStatus status = CompletionStatus::Ok;
    std::string model_version;
};

// Replays a JSON Lines table of {query_hash, response_text, status}. The hash
// is fingerprint(query.text). Unknown hashes are transport errors.
class ScriptedBackend final : public Backend {
public:
    ScriptedBackend(BackendDescriptor d, std::map<std::string, ScriptedEntry> table)
        : Backend(std::move(d)), table_(std::move(table)) {}

    static std::map<std::string, ScriptedEntry> parse_table(std::string_view jsonl) {
        std::map<std::string, ScriptedEntry> table;
        std::size_t line_no = 0, pos = 0;
        while (pos < jsonl.size()) {
            auto end = jsonl.find('\n', pos);
            if (end == std::string_view::npos) end = jsonl.size();
            std::string_view line = jsonl.substr(pos, end - pos);
            pos = end + 1;
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                ScriptedEntry e;
                e.response_text = j.value("response_text", "");
                const auto status = parse_completion_status(j.value("status", "OK"));
                if (!status) throw std::runtime_error("unknown status");
                e.status = *status;
                e.model_version = j.value("model_version", "scripted/1");
                const std::string hash = j.at("query_hash").get<std::string>();
                if (!table.emplace(hash, std::move(e)).second) throw std::runtime_error("duplicate query_hash");
            } catch (const std::exception& ex) {
                fail(ErrorKind::BackendConfigError,
                     "script line " + std::to_string(line_no) + ": " + std::string(ex.what()));
            }
        }
        return table;
    }

    CompletionResult complete(const TransformedQuery& query) override {
        auto it = table_.find(fingerprint(query.text));
        if (it == table_.end()) {
            return CompletionResult::error(CompletionStatus::TransportError, "no scripted response for query");
        }
        const ScriptedEntry& e = it->second;
        if (e.status == CompletionStatus::Ok) return CompletionResult::ok(e.response_text, e.model_version);
        return CompletionResult::error(e.status, "scripted " + std::string(to_string(e.status)), e.model_version);
    }

private:
    std::map<std::string, ScriptedEntry> table_;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

struct Endpoint {
    std::string scheme_host_port;
    std::string path;
};

inline Endpoint split_endpoint(std::string_view url) {
    const auto scheme = url.find("://");
    if (scheme == std::string_view::npos) fail(ErrorKind::BackendConfigError, "endpoint needs a scheme: " + std::string(url));
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string_view::npos) return {std::string(url), "/"};
    return {std::string(url.substr(0, slash)), std::string(url.substr(slash))};
}

// Maps an HTTP reply from an OpenAI-style chat-completions endpoint onto the
// status taxonomy. Provider moderation shows up either as an error code or as
// an empty completion flagged by finish_reason.
inline CompletionResult interpret_chat_response(int http_status, std::string_view body, const std::string& model_id) {
    if (http_status == 429) return CompletionResult::error(CompletionStatus::RateLimited, "HTTP 429", model_id);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const std::exception&) {
        return CompletionResult::error(CompletionStatus::TransportError,
                                       "HTTP " + std::to_string(http_status) + ": unparseable body", model_id);
    }
    if (http_status != 200) {
        std::string code, type, message;
        if (j.contains("error") && j["error"].is_object()) {
            const auto& e = j["error"];
            if (e.contains("code") && e["code"].is_string()) code = e["code"].get<std::string>();
            if (e.contains("type") && e["type"].is_string()) type = e["type"].get<std::string>();
            if (e.contains("message") && e["message"].is_string()) message = e["message"].get<std::string>();
        }
        const std::string probe = to_lower_ascii(code + " " + type);
        if (probe.find("content_filter") != std::string::npos ||
            probe.find("content_policy") != std::string::npos || probe.find("moderation") != std::string::npos ||
            probe.find("safety") != std::string::npos) {
            return CompletionResult::error(CompletionStatus::BlockedAtInput, code.empty() ? type : code, model_id);
        }
        return CompletionResult::error(CompletionStatus::TransportError,
                                       "HTTP " + std::to_string(http_status) + ": " + message, model_id);
    }
    try {
        const std::string version = j.contains("model") && j["model"].is_string() ? j["model"].get<std::string>() : model_id;
        const auto& choice = j.at("choices").at(0);
        const std::string finish = choice.contains("finish_reason") && choice["finish_reason"].is_string()
                                       ? choice["finish_reason"].get<std::string>()
                                       : "";
        const auto& content = choice.at("message").at("content");
        std::string text = content.is_string() ? content.get<std::string>() : std::string();
        if (finish == "content_filter" || text.empty()) {
            return CompletionResult::error(CompletionStatus::BlockedAtInput,
                                           finish.empty() ? "empty completion" : finish, version);
        }
        return CompletionResult::ok(std::move(text), version);
    } catch (const std::exception& ex) {
        return CompletionResult::error(CompletionStatus::TransportError, std::string("malformed response: ") + ex.what(),
                                       model_id);
    }
}

// Plain chat-completions client: the query text is sent verbatim as a single
// user message with the provider's default decoding settings.
class HttpBackend final : public Backend {
public:
    HttpBackend(BackendDescriptor d, const EnvLookup& env)
        : Backend(std::move(d)), slots_(descriptor().max_concurrency) {
        const auto& desc = descriptor();
        endpoint_ = split_endpoint(desc.endpoint);
        if (!desc.auth_env.empty()) {
            auto token = env(desc.auth_env);
            if (!token || token->empty()) {
                fail(ErrorKind::BackendConfigError, "environment variable " + desc.auth_env + " is not set");
            }
            token_ = std::move(*token);
        }
        httplib::Client probe(endpoint_.scheme_host_port);
        if (!probe.is_valid()) {
            fail(ErrorKind::BackendConfigError, "unsupported endpoint " + desc.endpoint);
        }
    }

    static std::string request_body(std::string_view model_id, std::string_view text) {
        nlohmann::json body = {{"model", model_id},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", text}}})}};
        return body.dump();
    }

    CompletionResult complete(const TransformedQuery& query) override {
        const auto& desc = descriptor();
        slots_.acquire();
        struct Release {
            std::counting_semaphore<kMaxSlots>& s;
            ~Release() { s.release(); }
        } release{slots_};

        const auto start = std::chrono::steady_clock::now();
        httplib::Client client(endpoint_.scheme_host_port);
        const auto timeout = std::chrono::milliseconds(desc.timeout_ms);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        auto res = client.Post(endpoint_.path, headers, request_body(desc.model_id, query.text), "application/json");
        CompletionResult out =
            res ? interpret_chat_response(res->status, res->body, desc.model_id)
                : CompletionResult::error(CompletionStatus::TransportError, httplib::to_string(res.error()),
                                          desc.model_id);
        out.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return out;
    }

private:
    static constexpr std::ptrdiff_t kMaxSlots = 1024;
    Endpoint endpoint_;
    std::string token_;
    std::counting_semaphore<kMaxSlots> slots_;
};

inline std::unique_ptr<Backend> make_backend(const BackendDescriptor& d, const Method& method,
                                             const TemplateStore& store = TemplateStore::builtin(),
                                             const EnvLookup& env = process_env) {
    d.validate();
    switch (d.kind) {
        case BackendKind::HttpApi: return std::make_unique<HttpBackend>(d, env);
        case BackendKind::FaithfulDecoder: return std::make_unique<FaithfulDecoderBackend>(d, method, store);
        case BackendKind::Refuser: return std::make_unique<RefuserBackend>(d, method, store);
        case BackendKind::Scripted: {
            if (!file_exists(d.script_path)) {
                fail(ErrorKind::BackendConfigError, "script file not found: " + d.script_path);
            }
            return std::make_unique<ScriptedBackend>(d, ScriptedBackend::parse_table(read_file(d.script_path)));
        }
    }
    fail(ErrorKind::BackendConfigError, "unknown backend kind");
}

// Runs fn(i) for i in [0, n) on at most `concurrency` threads. Each index is
// visited exactly once; results are the caller's business.
template <typename Fn>
void parallel_for_index(std::size_t n, int concurrency, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, concurrency)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
}

// results[i] always answers queries[i]. Per-item failures, including
// exceptions escaping `attempt`, are recorded in place.
template <typename Attempt>
std::vector<CompletionResult> batch_complete_with(const std::vector<TransformedQuery>& queries, int concurrency,
                                                  Attempt&& attempt) {
    std::vector<CompletionResult> results(queries.size());
    parallel_for_index(queries.size(), concurrency, [&](std::size_t i) {
        try {
            results[i] = attempt(queries[i]);
        } catch (const std::exception& ex) {
            results[i] = CompletionResult::error(CompletionStatus::TransportError, ex.what());
        }
    });
    return results;
}

inline std::vector<CompletionResult> batch_complete(Backend& backend, const std::vector<TransformedQuery>& queries) {
    if (queries.empty()) fail(ErrorKind::InvalidArgument, "batch is empty");
    return batch_complete_with(queries, backend.descriptor().max_concurrency,
                               [&](const TransformedQuery& q) { return backend.complete(q); });
}

}  // namespace redteam
