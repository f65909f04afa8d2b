#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "redteam/backends.hpp"
#include "redteam/baselines.hpp"
#include "redteam/error.hpp"
#include "redteam/harness.hpp"
#include "redteam/method.hpp"
#include "redteam/pipeline.hpp"
#include "redteam/scoring.hpp"
#include "redteam/templates.hpp"
#include "redteam/util.hpp"

namespace redteam {

// One refusal phrase per line; blank lines and '#' comments ignored.
inline std::vector<std::string> parse_lexicon(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(pos, end - pos));
        pos = end + 1;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        const auto first = line.find_first_not_of(' ');
        if (first == std::string::npos || line[first] == '#') continue;
        out.push_back(line.substr(first));
    }
    return out;
}

// Sectioned JSON configuration: presets, baselines, backends, scoring and
// harness settings. Relative paths resolve against the config file's folder.
class Config {
public:
    Config() : root_(nlohmann::json::object()) {}

    static Config load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
        if (!file_exists(path.string())) fail(ErrorKind::ConfigError, "config file not found: " + path.string());
        Config c;
        try {
            c.root_ = nlohmann::json::parse(read_file(path.string()));
        } catch (const std::exception& ex) {
            fail(ErrorKind::ConfigError, "cannot parse " + path.string() + ": " + ex.what());
        }
        if (!c.root_.is_object()) fail(ErrorKind::ConfigError, "config root must be an object");
        c.base_dir_ = path.parent_path();
        c.apply_overrides(overrides);
        return c;
    }

    static Config defaults(const std::vector<std::string>& overrides = {}) {
        Config c;
        c.apply_overrides(overrides);
        return c;
    }

    // "a.b.c=value": value is parsed as JSON when possible, else taken as a string.
    void apply_overrides(const std::vector<std::string>& overrides) {
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos || eq == 0) fail(ErrorKind::ConfigError, "override must be key=value: " + o);
            std::string pointer;
            std::string_view key(o.data(), eq);
            std::size_t pos = 0;
            while (pos <= key.size()) {
                auto dot = key.find('.', pos);
                if (dot == std::string_view::npos) dot = key.size();
                if (dot == pos) fail(ErrorKind::ConfigError, "empty key segment in override: " + o);
                pointer += "/" + std::string(key.substr(pos, dot - pos));
                pos = dot + 1;
            }
            const std::string raw = o.substr(eq + 1);
            nlohmann::json value;
            try {
                value = nlohmann::json::parse(raw);
            } catch (const std::exception&) {
                value = raw;
            }
            root_[nlohmann::json::json_pointer(pointer)] = std::move(value);
        }
    }

    const nlohmann::json& json() const { return root_; }

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_absolute() || base_dir_.empty() ? path : base_dir_ / path;
    }

    std::string vigenere_key() const { return get<std::string>(root_, "vigenere_key", std::string(kDefaultVigenereKey)); }

    LayerAssignment layer_assignment() const {
        const auto s = get<std::string>(root_, "layer_assignment", "rot13_inner");
        if (s == "rot13_inner") return LayerAssignment::Rot13InnerVigenereOuter;
        if (s == "vigenere_inner") return LayerAssignment::VigenereInnerRot13Outer;
        fail(ErrorKind::ConfigError, "layer_assignment must be rot13_inner or vigenere_inner");
    }

    std::string default_preset() const { return get<std::string>(root_, "default_preset", "full"); }
    std::string default_backend() const { return get<std::string>(root_, "default_backend", "faithful"); }

    TemplateStore templates() const {
        if (!root_.contains("templates_dir")) return TemplateStore();
        return TemplateStore(resolve(root_["templates_dir"].get<std::string>()));
    }

    // Custom presets from the "presets" section win over the seven built-ins.
    TransformConfig preset(std::string_view name) const {
        TransformConfig cfg;
        const auto& presets = section("presets");
        if (auto it = presets.find(std::string(name)); it != presets.end()) {
            cfg.name = std::string(name);
            cfg.inner_layer = layer(*it, "inner");
            cfg.outer_layer = layer(*it, "outer");
            cfg.splitting_enabled = get<bool>(*it, "splitting", true);
            cfg.directive_template = get<std::string>(*it, "template", directive_template());
            return cfg;
        }
        try {
            cfg = make_preset(name, vigenere_key(), layer_assignment());
        } catch (const Error& e) {
            fail(ErrorKind::ConfigError, e.what());
        }
        cfg.directive_template = directive_template();
        return cfg;
    }

    BaselineSpec baseline(std::string_view kind_name) const {
        auto kind = parse_baseline_kind(kind_name);
        if (!kind) fail(ErrorKind::ConfigError, "unknown baseline '" + std::string(kind_name) + "'");
        BaselineSpec spec;
        spec.kind = *kind;
        const auto& s = section("baselines");
        const auto& b = s.contains(std::string(kind_name)) ? s[std::string(kind_name)] : empty_object();
        if (b.contains("carrier_path")) {
            const auto path = resolve(b["carrier_path"].get<std::string>());
            if (!file_exists(path.string())) fail(ErrorKind::ConfigError, "carrier file not found: " + path.string());
            spec.carrier = normalize_spacing(read_file(path.string()));
        }
        spec.carrier = get<std::string>(b, "carrier", spec.carrier);
        spec.delimiter = get<std::string>(b, "delimiter", spec.delimiter);
        spec.template_id = get<std::string>(b, "template", spec.template_id);
        spec.separator = get<std::string>(b, "separator", spec.separator);
        spec.split_min_length = get<std::size_t>(b, "min_length", spec.split_min_length);
        spec.split_chunk = get<std::size_t>(b, "chunk", spec.split_chunk);
        spec.disemvowel_substitute = get<bool>(b, "substitute", spec.disemvowel_substitute);
        return spec;
    }

    // A preset name (built-in or custom) or a baseline kind.
    Method method(std::string_view name) const {
        if (parse_baseline_kind(name) && !section("presets").contains(std::string(name))) return baseline(name);
        return preset(name);
    }

    BackendDescriptor backend(std::string_view name) const {
        BackendDescriptor d;
        d.name = std::string(name);
        const auto& s = section("backends");
        if (auto it = s.find(std::string(name)); it != s.end()) {
            const auto kind = parse_backend_kind(get<std::string>(*it, "kind", ""));
            if (!kind) fail(ErrorKind::BackendConfigError, "backend '" + d.name + "' has no valid kind");
            d.kind = *kind;
            d.endpoint = get<std::string>(*it, "endpoint", "");
            d.model_id = get<std::string>(*it, "model_id", "");
            d.auth_env = get<std::string>(*it, "auth_env", "");
            d.script_path = get<std::string>(*it, "script_path", "");
            if (!d.script_path.empty()) d.script_path = resolve(d.script_path).string();
            d.timeout_ms = get<int>(*it, "timeout_ms", d.timeout_ms);
            d.max_concurrency = get<int>(*it, "max_concurrency", d.max_concurrency);
        } else if (name == "faithful") {
            d.kind = BackendKind::FaithfulDecoder;
        } else if (name == "refuser") {
            d.kind = BackendKind::Refuser;
        } else {
            fail(ErrorKind::BackendConfigError, "unknown backend '" + d.name + "'");
        }
        d.validate();
        return d;
    }

    ScoringConfig scoring() const {
        ScoringConfig c;
        const auto& s = section("scoring");
        const auto mode = get<std::string>(s, "mode", "ORACLE");
        if (mode == "ORACLE") c.mode = ScoringMode::Oracle;
        else if (mode == "HEURISTIC") c.mode = ScoringMode::Heuristic;
        else fail(ErrorKind::ConfigError, "scoring.mode must be ORACLE or HEURISTIC");
        c.epsilon = get<double>(s, "epsilon", c.epsilon);
        c.gamma = get<double>(s, "gamma", c.gamma);
        c.dpf_floor = get<double>(s, "dpf_floor", c.dpf_floor);
        c.exec_floor_tokens = get<int>(s, "exec_floor_tokens", c.exec_floor_tokens);
        c.engagement_min_tokens = get<int>(s, "engagement_min_tokens", c.engagement_min_tokens);
        if (s.contains("lexicon_path")) {
            const auto path = resolve(s["lexicon_path"].get<std::string>());
            if (!file_exists(path.string())) fail(ErrorKind::ConfigError, "lexicon not found: " + path.string());
            c.refusal_lexicon = parse_lexicon(read_file(path.string()));
        }
        c.validate();
        return c;
    }

    // Harness knobs applied onto a RunSpec.
    void apply_harness(RunSpec& spec) const {
        const auto& h = section("harness");
        spec.batch_size = get<int>(h, "batch_size", spec.batch_size);
        spec.max_retries = get<int>(h, "max_retries", spec.max_retries);
        spec.retry_delay_ms = get<int>(h, "retry_delay_ms", spec.retry_delay_ms);
        spec.seed_note = "vigenere_key=" + vigenere_key() + "; pipeline has no random steps";
    }

private:
    static const nlohmann::json& empty_object() {
        static const nlohmann::json e = nlohmann::json::object();
        return e;
    }

    const nlohmann::json& section(const char* name) const {
        if (!root_.contains(name)) return empty_object();
        const auto& s = root_[name];
        if (!s.is_object()) fail(ErrorKind::ConfigError, std::string("section '") + name + "' must be an object");
        return s;
    }

    std::string directive_template() const {
        return get<std::string>(root_, "directive_template", std::string(kDefaultDirectiveTemplate));
    }

    template <typename T>
    static T get(const nlohmann::json& obj, const char* key, T fallback) {
        if (!obj.contains(key) || obj[key].is_null()) return fallback;
        try {
            return obj[key].get<T>();
        } catch (const std::exception& ex) {
            fail(ErrorKind::ConfigError, std::string("bad value for '") + key + "': " + ex.what());
        }
    }

    static std::optional<CipherKey> layer(const nlohmann::json& preset, const char* key) {
        if (!preset.contains(key) || preset[key].is_null()) return std::nullopt;
        const auto& v = preset[key];
        try {
            if (v.is_string() && v.get<std::string>() == "ROT13") return CipherKey::rot13();
            if (v.is_object() && v.value("kind", "") == "VIGENERE") return CipherKey::vigenere(v.value("keyword", ""));
            if (v.is_object() && v.value("kind", "") == "ROT13") return CipherKey::rot13();
        } catch (const Error& e) {
            fail(ErrorKind::ConfigError, e.what());
        }
        fail(ErrorKind::ConfigError, std::string("preset layer '") + key + "' must be \"ROT13\" or {kind, keyword}");
    }

    nlohmann::json root_;
    std::filesystem::path base_dir_;
};

}  // namespace redteam
