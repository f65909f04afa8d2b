#include <atomic>

#include <gtest/gtest.h>

#include "redteam/harness.hpp"
#include "test_support.hpp"

using namespace redteam;

namespace {

ErrorKind kind_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no redteam::Error thrown";
    return ErrorKind::ConfigError;
}

RunSpec spec_for(BackendKind kind, const std::string& preset = "full") {
    RunSpec s;
    s.dataset_path = rt_test::fixture("corpus_50.jsonl").string();
    s.method = make_preset(preset);
    s.backend.name = "offline";
    s.backend.kind = kind;
    s.run_id = "t";
    return s;
}

RunContext no_sleep() {
    RunContext ctx;
    ctx.sleep = [](std::chrono::milliseconds) {};
    return ctx;
}

BackendDescriptor descriptor_for_tests() {
    BackendDescriptor d;
    d.name = "fn";
    d.kind = BackendKind::Scripted;
    return d;
}

// Backend whose replies are chosen per call by a callback.
class FnBackend final : public Backend {
public:
    using Fn = std::function<CompletionResult(const TransformedQuery&)>;
    explicit FnBackend(Fn fn) : Backend(descriptor_for_tests()), fn_(std::move(fn)) {}
    CompletionResult complete(const TransformedQuery& q) override { return fn_(q); }

private:
    Fn fn_;
};

void strip_volatile(std::vector<EvaluationRecord>& rs) {
    for (auto& r : rs) r.timestamp.clear();
}

}  // namespace

TEST(Harness, DatasetParsing) {
    const auto items = parse_dataset("{\"id\":\"a\",\"text\":\"hello there\",\"category\":\"X\"}\n\n{\"id\":7,\"text\":\"b\"}\n");
    ASSERT_EQ(items.size(), 2u);
    EXPECT_EQ(items[1].id, "7");
    EXPECT_EQ(items[1].category, "uncategorized");
    EXPECT_EQ(kind_of([] { parse_dataset(""); }), ErrorKind::DatasetError);
    EXPECT_EQ(kind_of([] { parse_dataset("{\"id\":\"a\"}"); }), ErrorKind::DatasetError);
    EXPECT_EQ(kind_of([] { parse_dataset("{\"id\":\"a\",\"text\":\"  \"}"); }), ErrorKind::DatasetError);
    EXPECT_EQ(kind_of([] { parse_dataset("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}"); }),
              ErrorKind::DatasetError);
    EXPECT_EQ(kind_of([] { load_dataset("/nonexistent.jsonl"); }), ErrorKind::DatasetError);
    EXPECT_EQ(load_dataset(rt_test::fixture("corpus_50.jsonl")).size(), 50u);
}

TEST(Harness, RetryOnlyTechnicalFailures) {
    int calls = 0;
    std::vector<std::chrono::milliseconds> waits;
    const auto sleeper = [&](std::chrono::milliseconds d) { waits.push_back(d); };
    auto r = retry_wrap([&] { return ++calls, CompletionResult::ok(std::string(kCanonicalRefusal), "m"); }, 3,
                        std::chrono::milliseconds(2000), sleeper);
    EXPECT_EQ(r.attempts, 1);
    EXPECT_TRUE(waits.empty());

    calls = 0;
    r = retry_wrap([&] { return ++calls, CompletionResult::error(CompletionStatus::BlockedAtInput, "f"); }, 3,
                   std::chrono::milliseconds(2000), sleeper);
    EXPECT_EQ(r.attempts, 1);

    calls = 0;
    r = retry_wrap([&] { return ++calls, CompletionResult::error(CompletionStatus::TransportError, "t"); }, 3,
                   std::chrono::milliseconds(2000), sleeper);
    EXPECT_EQ(r.attempts, 4);
    EXPECT_EQ(r.result.status, CompletionStatus::TransportError);
    EXPECT_EQ(waits, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(2000), std::chrono::milliseconds(4000),
                                                             std::chrono::milliseconds(8000)}));
    EXPECT_EQ(kind_of([&] { retry_wrap([] { return CompletionResult::ok("x", "m"); }, -1, std::chrono::milliseconds(1)); }),
              ErrorKind::InvalidArgument);
}

TEST(Harness, FaithfulRunOverCorpus) {
    const auto records = run(spec_for(BackendKind::FaithfulDecoder), no_sleep());
    ASSERT_EQ(records.size(), 50u);
    const auto items = load_dataset(rt_test::fixture("corpus_50.jsonl"));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        EXPECT_EQ(r.prompt_id, items[i].id);
        EXPECT_EQ(r.category, items[i].category);
        EXPECT_EQ(r.method, "full");
        EXPECT_EQ(r.attempt_count, 1);
        EXPECT_EQ(r.model_version, "faithful-decoder/1");
        EXPECT_EQ(r.config_fingerprint, make_preset("full").fingerprint());
        EXPECT_EQ(std::tie(r.bypass, r.reconstruction, r.execution), std::make_tuple(1, 1, 1));
    }
}

TEST(Harness, TransportFailuresAreRetriedThenExcluded) {
    std::atomic<int> calls{0};
    FnBackend b([&](const TransformedQuery& q) {
        ++calls;
        if (q.text.find("Fragment") != std::string::npos && calls % 2 == 0) {
            return CompletionResult::error(CompletionStatus::RateLimited, "slow down");
        }
        return CompletionResult::error(CompletionStatus::TransportError, "down");
    });
    auto spec = spec_for(BackendKind::Scripted);
    spec.max_retries = 2;
    const auto items = parse_dataset("{\"id\":\"a\",\"text\":\"one two three\"}\n{\"id\":\"b\",\"text\":\"four five\"}");
    const auto records = run(spec, b, items, no_sleep());
    for (const auto& r : records) {
        EXPECT_FALSE(r.scored());
        EXPECT_EQ(r.attempt_count, 3);
        EXPECT_FALSE(r.failure_mode);
    }
    EXPECT_EQ(calls.load(), 6);
    EXPECT_EQ(kind_of([&] { aggregate(records); }), ErrorKind::EmptyRun);
}

TEST(Harness, GenerationErrorsBecomeExcludedRecords) {
    auto spec = spec_for(BackendKind::FaithfulDecoder);
    spec.method = BaselineSpec{.kind = BaselineKind::AutoPayloadSplitting, .separator = "|"};
    auto backend = make_backend(spec.backend, spec.method);
    const auto items = parse_dataset("{\"id\":\"a\",\"text\":\"pipe | inside\"}\n{\"id\":\"b\",\"text\":\"kindle fires\"}");
    const auto records = run(spec, *backend, items, no_sleep());
    EXPECT_EQ(records[0].status, CompletionStatus::TransportError);
    EXPECT_NE(records[0].error.find("SeparatorCollision"), std::string::npos);
    EXPECT_EQ(records[1].status, CompletionStatus::Ok);
}

TEST(Harness, OfflineRunsAreDeterministic) {
    auto a = run(spec_for(BackendKind::Refuser), no_sleep());
    auto b = run(spec_for(BackendKind::Refuser), no_sleep());
    strip_volatile(a);
    strip_volatile(b);
    EXPECT_EQ(a, b);
}

TEST(Harness, ResumeSkipsLoggedPrompts) {
    std::atomic<int> calls{0};
    const auto spec = spec_for(BackendKind::FaithfulDecoder);
    auto inner = make_backend(spec.backend, spec.method);
    FnBackend counting([&](const TransformedQuery& q) {
        ++calls;
        return inner->complete(q);
    });
    const auto items = load_dataset(spec.dataset_path);
    auto ctx = no_sleep();
    const auto full = run(spec, counting, items, ctx);
    EXPECT_EQ(calls.load(), 50);

    calls = 0;
    ctx.resume.assign(full.begin(), full.begin() + 30);
    const auto resumed = run(spec, counting, items, ctx);
    EXPECT_EQ(calls.load(), 20);
    ASSERT_EQ(resumed.size(), 50u);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(resumed[i], full[i]);
}

TEST(Harness, WriteAndReadLog) {
    rt_test::TempDir tmp;
    auto spec = spec_for(BackendKind::FaithfulDecoder);
    const auto records = run(spec, no_sleep());
    const auto written = write_log(records, tmp.path() / "run", {{"run", run_spec_json(spec)}});
    EXPECT_EQ(written.manifest["record_count"], 50);
    EXPECT_EQ(written.manifest["model_versions"], nlohmann::json::array({"faithful-decoder/1"}));
    EXPECT_EQ(written.manifest["run"]["method"]["name"], "full");
    EXPECT_EQ(written.manifest["aggregate"]["exec_rate"], 100.0);
    EXPECT_TRUE(written.manifest["environment"].contains("compiler"));

    const auto back = read_log(tmp.path() / "run");
    EXPECT_EQ(back.records, records);
    EXPECT_EQ(back.skipped_lines, 0u);
    EXPECT_EQ(read_log(written.records_path).records.size(), 50u);
    EXPECT_EQ(kind_of([&] { read_log(tmp.path() / "missing"); }), ErrorKind::DatasetError);
}

TEST(Harness, CorruptLogLinesAreSkippedWithWarnings) {
    EvaluationRecord r;
    r.prompt_id = "x";
    r.original = "o";
    const std::string good = to_json(r).dump();
    nlohmann::json bad_stage = to_json(r);
    bad_stage["execution"] = 1;
    const auto res = parse_log(good + "\n{truncated\n" + bad_stage.dump() + "\n\n" + good + "\n");
    EXPECT_EQ(res.records.size(), 2u);
    EXPECT_EQ(res.total_lines, 4u);
    EXPECT_EQ(res.skipped_lines, 2u);
    EXPECT_EQ(res.warnings.size(), 2u);
    EXPECT_DOUBLE_EQ(res.skipped_fraction(), 0.5);
}

TEST(Harness, ProgressWriterAppendsEachRecord) {
    rt_test::TempDir tmp;
    auto ctx = no_sleep();
    {
        JsonlWriter w(tmp.path() / "p" / "records.jsonl", true);
        ctx.progress = &w;
        run(spec_for(BackendKind::Refuser), ctx);
    }
    EXPECT_EQ(read_log(tmp.path() / "p").records.size(), 50u);
    EXPECT_EQ(kind_of([&] { JsonlWriter("/proc/forbidden/dir/x.jsonl"); }), ErrorKind::LogWriteError);
}

TEST(Harness, RunSpecValidation) {
    auto s = spec_for(BackendKind::FaithfulDecoder);
    s.batch_size = 0;
    EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::ConfigError);
    s = spec_for(BackendKind::FaithfulDecoder);
    s.run_id.clear();
    EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::ConfigError);
}
