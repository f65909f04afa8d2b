#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "redteam/pipeline.hpp"
#include "redteam/record.hpp"
#include "redteam/scoring.hpp"
#include "redteam/util.hpp"

namespace redteam {

struct Table {
    std::string title;
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> rows;
};

inline std::string render_markdown(const Table& t) {
    std::string out = "### " + t.title + "\n\n|";
    for (const auto& h : t.headers) out += " " + h + " |";
    out += "\n|";
    for (std::size_t i = 0; i < t.headers.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
    out += "\n";
    for (const auto& row : t.rows) {
        out += "|";
        for (const auto& cell : row) out += " " + cell + " |";
        out += "\n";
    }
    return out;
}

inline std::string csv_cell(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string render_csv(const Table& t) {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_cell(cells[i]);
        out += "\n";
    };
    line(t.headers);
    for (const auto& row : t.rows) line(row);
    return out;
}

inline std::string pct2(double v) { return format_fixed(v, 2); }

// Method name as stored in records -> display label.
inline std::string display_method(std::string_view name) { return std::string(preset_label(name)); }

// Summaries per method, in order of first appearance.
struct MethodSummaries {
    std::vector<std::string> order;
    std::map<std::string, MetricsSummary> by_method;
};

inline MethodSummaries summarize_by_method(const std::vector<EvaluationRecord>& records) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<EvaluationRecord>> groups;
    for (const auto& r : records) {
        auto [it, inserted] = groups.try_emplace(r.method);
        if (inserted) order.push_back(r.method);
        it->second.push_back(r);
    }
    MethodSummaries out;
    for (const auto& m : order) {
        try {
            out.by_method.emplace(m, aggregate(groups[m]));
            out.order.push_back(m);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::EmptyRun) throw;
        }
    }
    return out;
}

inline Table stage_table(const MethodSummaries& s) {
    Table t{"Success rates by stage", {"Method", "N", "Bypass (%)", "Reconstruction (%)", "Execution (%)"}, {}};
    for (const auto& m : s.order) {
        const auto& x = s.by_method.at(m);
        t.rows.push_back({display_method(m), std::to_string(x.n), pct2(x.bypass_rate), pct2(x.recon_rate),
                          pct2(x.exec_rate)});
    }
    return t;
}

inline Table failure_table(const MethodSummaries& s) {
    Table t{"Failure mode distribution among failed prompts", {"Method", "Failed", "DPF (%)", "PR (%)", "RAR (%)", "OTH (%)"}, {}};
    for (const auto& m : s.order) {
        const auto& x = s.by_method.at(m);
        std::vector<std::string> row{display_method(m), std::to_string(x.failed)};
        for (auto f : kFailureModes) row.push_back(pct2(x.failure_distribution.at(f)));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline Table category_table(const MethodSummaries& s) {
    const bool multi = s.order.size() > 1;
    Table t{"Success by content category", {}, {}};
    if (multi) t.headers.push_back("Method");
    for (const char* h : {"Category", "#Prompts", "Bypass (%)", "Recon (%)", "Exec (%)"}) t.headers.push_back(h);
    for (const auto& m : s.order) {
        for (const auto& [cat, c] : s.by_method.at(m).per_category) {
            std::vector<std::string> row;
            if (multi) row.push_back(display_method(m));
            for (auto v : {cat, std::to_string(c.n), pct2(c.bypass_rate()), pct2(c.recon_rate()), pct2(c.exec_rate())}) {
                row.push_back(v);
            }
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

inline Table length_table(const MethodSummaries& s) {
    const bool multi = s.order.size() > 1;
    Table t{"Success by prompt length (SHORT < 20 tokens, MEDIUM 20-50, LONG > 50)", {}, {}};
    if (multi) t.headers.push_back("Method");
    for (const char* h : {"Length", "#Prompts", "Bypass (%)", "Recon (%)", "Exec (%)"}) t.headers.push_back(h);
    for (const auto& m : s.order) {
        const auto& bins = s.by_method.at(m).per_length_bin;
        for (auto b : kLengthBins) {
            auto it = bins.find(b);
            if (it == bins.end()) continue;
            const auto& c = it->second;
            std::vector<std::string> row;
            if (multi) row.push_back(display_method(m));
            for (auto v : {std::string(to_string(b)), std::to_string(c.n), pct2(c.bypass_rate()), pct2(c.recon_rate()),
                           pct2(c.exec_rate())}) {
                row.push_back(v);
            }
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

// Relative change (%) of a variant against the full method; nullopt when the
// full method's rate is zero.
inline std::optional<double> relative_delta(double variant, double full) {
    if (full == 0.0) return std::nullopt;
    return (variant - full) / full * 100.0;
}

struct AblationRow {
    std::string preset;
    std::optional<double> bypass;
    std::optional<double> recon;
    std::optional<double> exec;
};

// `summaries` maps preset name -> summary and must contain "full".
inline std::vector<AblationRow> ablation_deltas(const std::map<std::string, MetricsSummary>& summaries) {
    auto full_it = summaries.find("full");
    if (full_it == summaries.end()) fail(ErrorKind::InvalidArgument, "ablation needs the full preset");
    const auto& full = full_it->second;
    std::vector<AblationRow> rows;
    for (auto name : kPresetNames) {
        auto it = summaries.find(std::string(name));
        if (it == summaries.end()) continue;
        const auto& v = it->second;
        rows.push_back({std::string(name), relative_delta(v.bypass_rate, full.bypass_rate),
                        relative_delta(v.recon_rate, full.recon_rate), relative_delta(v.exec_rate, full.exec_rate)});
    }
    return rows;
}

inline Table ablation_table(const std::vector<AblationRow>& rows) {
    Table t{"Ablation: relative change (%) vs. full method (full = 100%)",
            {"Variant", "Bypass (dB)", "Recon (dR)", "Exec (dX)"},
            {}};
    auto cell = [](const std::optional<double>& v) { return v ? format_fixed(*v, 3) + "%" : std::string("n/a"); };
    for (const auto& r : rows) {
        if (r.preset == "full") {
            t.rows.push_back({display_method(r.preset), "100.000%", "100.000%", "100.000%"});
        } else {
            t.rows.push_back({display_method(r.preset), cell(r.bypass), cell(r.recon), cell(r.exec)});
        }
    }
    return t;
}

}  // namespace redteam
