#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "redteam/config.hpp"
#include "redteam/error.hpp"
#include "redteam/harness.hpp"
#include "redteam/method.hpp"
#include "redteam/report.hpp"
#include "redteam/util.hpp"

namespace redteam {

inline constexpr int kExitOk = 0;
inline constexpr int kExitMismatch = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDecode = 4;

inline int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::LogWriteError:
        case ErrorKind::DatasetError: return kExitIo;
        case ErrorKind::DecodeStructureError:
        case ErrorKind::MalformedPartition: return kExitDecode;
        default: return kExitConfig;
    }
}

namespace cli_detail {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string preset;
    std::string baseline;
    std::string format = "md";

    Config load() const {
        return config_path.empty() ? Config::defaults(overrides) : Config::load(config_path, overrides);
    }

    Method method(const Config& cfg) const {
        if (!preset.empty() && !baseline.empty()) fail(ErrorKind::ConfigError, "--preset and --baseline are exclusive");
        if (!baseline.empty()) return cfg.baseline(baseline);
        return cfg.preset(preset.empty() ? cfg.default_preset() : preset);
    }
};

inline std::string read_input(const std::string& path) {
    if (!file_exists(path)) fail(ErrorKind::DatasetError, "cannot read " + path);
    return read_file(path);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) fail(ErrorKind::LogWriteError, "cannot write " + path.string());
    f << text;
    f.close();
    if (!f) fail(ErrorKind::LogWriteError, "write failed on " + path.string());
}

inline std::string render_tables(const std::vector<Table>& tables, const std::string& format) {
    std::string out;
    for (const auto& t : tables) {
        if (!out.empty()) out += "\n";
        out += format == "csv" ? "# " + t.title + "\n" + render_csv(t) : render_markdown(t);
    }
    return out;
}

inline std::string summary_line(const std::string& label, const MetricsSummary& s) {
    std::string line = label + ": n=" + std::to_string(s.n) + " excluded=" + std::to_string(s.excluded) +
                       " bypass=" + pct2(s.bypass_rate) + " recon=" + pct2(s.recon_rate) +
                       " exec=" + pct2(s.exec_rate) + "\nfailures (" + std::to_string(s.failed) + "):";
    for (auto m : kFailureModes) line += " " + std::string(to_string(m)) + "=" + pct2(s.failure_distribution.at(m));
    return line + "\n";
}

// Run directory name of a log path (a run directory or its records file).
inline std::string run_name(const std::filesystem::path& path) {
    const auto p = std::filesystem::is_directory(path) ? path : path.parent_path();
    const auto name = p.lexically_normal().filename().string();
    return name.empty() ? p.lexically_normal().parent_path().filename().string() : name;
}

struct EvalOptions {
    std::string dataset;
    std::string backend;
    std::string out_dir = "runs";
    std::string run_id;
    bool resume = false;
};

// Runs one method over a dataset and writes <out>/<run_id>/{records.jsonl,manifest.json}.
inline std::vector<EvaluationRecord> evaluate_method(const Config& cfg, const Method& method, const EvalOptions& o,
                                                     const std::string& run_id, const EnvLookup& env,
                                                     const Sleeper& sleep, std::ostream& err) {
    RunSpec spec;
    spec.dataset_path = o.dataset;
    spec.method = method;
    spec.backend = cfg.backend(o.backend.empty() ? cfg.default_backend() : o.backend);
    spec.run_id = run_id;
    spec.scoring = cfg.scoring();
    cfg.apply_harness(spec);
    spec.validate();

    const TemplateStore store = cfg.templates();
    const auto dataset = load_dataset(spec.dataset_path);
    auto backend = make_backend(spec.backend, spec.method, store, env);

    const std::filesystem::path run_dir = std::filesystem::path(o.out_dir) / run_id;
    RunContext ctx;
    ctx.store = &store;
    ctx.sleep = sleep;
    const bool have_log = std::filesystem::exists(run_dir / kRecordsFile);
    if (o.resume && have_log) {
        auto prior = read_log(run_dir);
        for (const auto& w : prior.warnings) err << "warning: " << w << "\n";
        for (auto& r : prior.records) {
            if (r.method == method_name(method)) ctx.resume.push_back(std::move(r));
        }
        err << "resuming " << run_id << ": " << ctx.resume.size() << " records already logged\n";
    }
    const std::string started = utc_timestamp();
    std::vector<EvaluationRecord> records;
    {
        JsonlWriter progress(run_dir / kRecordsFile, !(o.resume && have_log));
        ctx.progress = &progress;
        records = run(spec, *backend, dataset, ctx);
    }
    nlohmann::json info = {{"run", run_spec_json(spec)}, {"started_at", started}, {"finished_at", utc_timestamp()},
                           {"resumed_records", ctx.resume.size()}};
    write_log(records, run_dir, info);
    return records;
}

}  // namespace cli_detail

// In-process entry point. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                   const EnvLookup& env = process_env, Sleeper sleep = real_sleep) {
    using namespace cli_detail;
    CLI::App app{"Layered-obfuscation red-teaming toolkit: transform, decode, evaluate, ablate, report"};
    app.name("redteam");
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("--config", common.config_path, "JSON config file");
    app.add_option("--override", common.overrides, "Dotted-path override, e.g. scoring.epsilon=0.7")
        ->allow_extra_args(false);

    auto add_method = [&](CLI::App* sub) {
        sub->add_option("--preset", common.preset, "Pipeline preset (full, no_rot13, ..., or a custom preset)");
        sub->add_option("--baseline", common.baseline,
                        "Baseline: pair, authority_endorsement, auto_payload_splitting, disemvowel, base64_raw");
    };

    // transform
    auto* transform_cmd = app.add_subcommand("transform", "Obfuscate one prompt");
    std::string t_prompt, t_input, t_out;
    transform_cmd->add_option("prompt", t_prompt, "Prompt text");
    transform_cmd->add_option("--input", t_input, "Read the prompt from a file");
    transform_cmd->add_option("--out", t_out, "Also write the query to this file");
    add_method(transform_cmd);

    // decode
    auto* decode_cmd = app.add_subcommand("decode", "Invert a query with the oracle decoder");
    std::string d_query, d_input, d_expect, d_expect_file;
    decode_cmd->add_option("query", d_query, "Query text");
    decode_cmd->add_option("--input", d_input, "Read the query from a file");
    decode_cmd->add_option("--expect", d_expect, "Compare against this prompt; exit 1 on mismatch");
    decode_cmd->add_option("--expect-file", d_expect_file, "Like --expect, read from a file");
    add_method(decode_cmd);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Run a method over a dataset against a backend");
    EvalOptions eo;
    eval_cmd->add_option("--dataset", eo.dataset, "JSONL dataset {id, text, category}")->required();
    eval_cmd->add_option("--backend", eo.backend, "Backend name (configured, or faithful / refuser)");
    eval_cmd->add_option("--out", eo.out_dir, "Run directory root");
    eval_cmd->add_option("--run-id", eo.run_id, "Run id (defaults to the method name)");
    eval_cmd->add_flag("--resume", eo.resume, "Skip prompts already in the run's records.jsonl");
    add_method(eval_cmd);

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "Run or read all seven presets and report relative deltas");
    EvalOptions ao;
    ao.out_dir = "runs/ablation";
    std::string from_logs;
    ablate_cmd->add_option("--dataset", ao.dataset, "JSONL dataset");
    ablate_cmd->add_option("--backend", ao.backend, "Backend name");
    ablate_cmd->add_option("--out", ao.out_dir, "Directory for per-preset runs and the table");
    ablate_cmd->add_option("--from-logs", from_logs, "Read <dir>/<preset>/records.jsonl instead of running");
    ablate_cmd->add_option("--format", common.format, "md or csv")->check(CLI::IsMember({"md", "csv"}));

    // report
    auto* report_cmd = app.add_subcommand("report", "Render tables from one or more run logs");
    std::vector<std::string> logs;
    std::string r_out;
    report_cmd->add_option("logs", logs, "Run directories or records files")->required();
    report_cmd->add_option("--format", common.format, "md or csv")->check(CLI::IsMember({"md", "csv"}));
    report_cmd->add_option("--out", r_out, "Also write the report to this file");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        const Config cfg = common.load();

        if (transform_cmd->parsed()) {
            if (t_prompt.empty() == t_input.empty()) fail(ErrorKind::ConfigError, "give a prompt or --input, not both");
            const std::string prompt = t_input.empty() ? t_prompt : read_input(t_input);
            const TemplateStore store = cfg.templates();
            const Method method = common.method(cfg);
            const auto q = transform(prompt, method, store);
            out << q.text;
            if (q.text.empty() || q.text.back() != '\n') out << "\n";
            err << "method: " << method_name(method) << "\n";
            err << "config_fingerprint: " << method_fingerprint(method) << "\n";
            if (!t_out.empty()) write_text(t_out, q.text);
            return kExitOk;
        }

        if (decode_cmd->parsed()) {
            if (d_query.empty() == d_input.empty()) fail(ErrorKind::ConfigError, "give a query or --input, not both");
            std::string query = d_input.empty() ? d_query : read_input(d_input);
            const TemplateStore store = cfg.templates();
            const Method method = common.method(cfg);
            std::string decoded;
            if (const auto* tc = std::get_if<TransformConfig>(&method)) {
                // Queries end in the directive's closing line; a trailing
                // newline from a shell or editor is not part of them.
                while (!query.empty() && (query.back() == '\n' || query.back() == '\r')) query.pop_back();
                decoded = oracle_decode(query, *tc, store);
            } else {
                auto inv = invert(query, method, store);
                if (!inv) fail(ErrorKind::DecodeStructureError, "query does not have the baseline's structure");
                decoded = *inv;
            }
            out << decoded << "\n";
            if (!d_expect.empty() || !d_expect_file.empty()) {
                const std::string expect = normalize_spacing(d_expect.empty() ? read_input(d_expect_file) : d_expect);
                if (expect != decoded) {
                    err << "MISMATCH: decoded text differs from the expected prompt\n";
                    return kExitMismatch;
                }
                err << "MATCH\n";
            }
            return kExitOk;
        }

        if (eval_cmd->parsed()) {
            const Method method = common.method(cfg);
            const std::string run_id = eo.run_id.empty() ? method_name(method) : eo.run_id;
            const auto records = evaluate_method(cfg, method, eo, run_id, env, sleep, err);
            out << summary_line(method_label(method), aggregate(records));
            out << "log: " << (std::filesystem::path(eo.out_dir) / run_id / kRecordsFile).string() << "\n";
            return kExitOk;
        }

        if (ablate_cmd->parsed()) {
            std::map<std::string, MetricsSummary> summaries;
            MethodSummaries ordered;
            for (auto name : kPresetNames) {
                const std::string preset(name);
                std::vector<EvaluationRecord> records;
                if (!from_logs.empty()) {
                    const auto dir = std::filesystem::path(from_logs) / preset;
                    if (!std::filesystem::exists(dir)) {
                        if (preset == "full") fail(ErrorKind::DatasetError, "missing log for full preset: " + dir.string());
                        err << "warning: no log for " << preset << ", skipped\n";
                        continue;
                    }
                    auto log = read_log(dir);
                    for (const auto& w : log.warnings) err << "warning: " << preset << ": " << w << "\n";
                    records = std::move(log.records);
                } else {
                    if (ao.dataset.empty()) fail(ErrorKind::ConfigError, "ablate needs --dataset or --from-logs");
                    records = evaluate_method(cfg, cfg.preset(preset), ao, preset, env, sleep, err);
                }
                auto s = aggregate(records);
                ordered.order.push_back(preset);
                ordered.by_method.emplace(preset, s);
                summaries.emplace(preset, std::move(s));
            }
            const std::string text =
                render_tables({stage_table(ordered), ablation_table(ablation_deltas(summaries))}, common.format);
            out << text;
            if (from_logs.empty() || ablate_cmd->count("--out")) {
                write_text(std::filesystem::path(ao.out_dir) / ("ablation." + common.format), text);
            }
            return kExitOk;
        }

        if (report_cmd->parsed()) {
            // With several logs every row is tagged with its run, so the same
            // method against different backends stays separate.
            MethodSummaries s;
            std::size_t total = 0, skipped = 0;
            for (const auto& path : logs) {
                auto log = read_log(path);
                for (const auto& w : log.warnings) err << "warning: " << path << ": " << w << "\n";
                total += log.total_lines;
                skipped += log.skipped_lines;
                const auto part = summarize_by_method(log.records);
                for (const auto& m : part.order) {
                    const std::string key = logs.size() > 1 ? display_method(m) + " @ " + run_name(path) : m;
                    if (s.by_method.emplace(key, part.by_method.at(m)).second) s.order.push_back(key);
                }
            }
            if (total > 0 && static_cast<double>(skipped) / static_cast<double>(total) > 0.01) {
                err << "error: " << skipped << " of " << total << " log lines are corrupt (more than 1%)\n";
                return kExitIo;
            }
            if (s.order.empty()) fail(ErrorKind::EmptyRun, "no scored records in the given logs");
            const std::string text = render_tables(
                {stage_table(s), failure_table(s), category_table(s), length_table(s)}, common.format);
            out << text;
            if (!r_out.empty()) write_text(r_out, text);
            return kExitOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        err << "error [ConfigError]: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error [IO]: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitConfig;
}

}  // namespace redteam
