#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "redteam/baselines.hpp"
#include "redteam/pipeline.hpp"

namespace redteam {

// What the harness applies to each prompt: a pipeline variant or a baseline.
using Method = std::variant<TransformConfig, BaselineSpec>;

inline std::string method_name(const Method& m) {
    if (const auto* cfg = std::get_if<TransformConfig>(&m)) return cfg->name;
    return std::get<BaselineSpec>(m).name();
}

inline std::string method_label(const Method& m) {
    if (const auto* cfg = std::get_if<TransformConfig>(&m)) return std::string(preset_label(cfg->name));
    return std::get<BaselineSpec>(m).name();
}

inline std::string method_fingerprint(const Method& m) {
    return std::visit([](const auto& v) { return v.fingerprint(); }, m);
}

inline TransformedQuery transform(std::string_view forbidden, const Method& m,
                                  const TemplateStore& store = TemplateStore::builtin()) {
    if (const auto* cfg = std::get_if<TransformConfig>(&m)) return generate(forbidden, *cfg, store);
    return apply_baseline(forbidden, std::get<BaselineSpec>(m), store);
}

// Recovers the prompt a query was built from; nullopt when the query does not
// have the method's structure.
inline std::optional<std::string> invert(std::string_view query, const Method& m,
                                         const TemplateStore& store = TemplateStore::builtin()) {
    if (const auto* cfg = std::get_if<TransformConfig>(&m)) {
        try {
            return oracle_decode(query, *cfg, store);
        } catch (const Error&) {
            return std::nullopt;
        }
    }
    return invert_baseline(query, std::get<BaselineSpec>(m), store);
}

}  // namespace redteam
