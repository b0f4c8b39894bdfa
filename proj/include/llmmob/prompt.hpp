#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "llmmob/hash.hpp"
#include "llmmob/stays.hpp"
#include "llmmob/time_util.hpp"

namespace llmmob {

// Fully determines the rendered prompt together with the sample and template.
struct PromptConfig {
    int k = 10;                   // number of ranked places to request
    bool time_aware = true;       // include the target (start_time, day_of_week)
    bool include_history = true;  // <history> block
    bool include_context = true;  // <context> block
    bool include_guidance = true;
    bool ask_reason = true;
    std::string template_id = "main_v1";

    bool operator==(const PromptConfig&) const = default;
};

inline void validate(const PromptConfig& cfg) {
    if (cfg.k < 1) throw std::invalid_argument("PromptConfig.k must be >= 1");
    if (!cfg.include_history && !cfg.include_context)
        throw std::invalid_argument("PromptConfig: at least one of history/context must be included");
}

struct PromptText {
    std::string text;
    std::string prompt_hash;  // digest of (template_id, text, k)
};

struct TemplateMissingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PlaceholderUnfilledError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stays render as ("17:30", "Tuesday", 35, 1); the target as (15:13, Friday).
inline std::string serialize_stay(const Stay& s) {
    std::ostringstream os;
    os << "(\"" << format_hhmm(s.start_minutes) << "\", \"" << weekday_name(s.day_of_week) << "\", "
       << s.duration_minutes << ", " << s.place_id << ")";
    return os.str();
}

inline std::string serialize_stay_list(const std::vector<Stay>& stays) {
    std::string out = "[";
    for (std::size_t i = 0; i < stays.size(); ++i) {
        if (i) out += ", ";
        out += serialize_stay(stays[i]);
    }
    out += "]";
    return out;
}

inline std::string serialize_target(const TargetSlot& t) {
    return "(" + format_hhmm(t.start_minutes) + ", " + std::string(weekday_name(t.day_of_week)) + ")";
}

namespace detail {

// Conditional sections: {{#name}}...{{/name}}, nestable. Section names map to
// PromptConfig flags; an unknown name is a template defect.
inline std::string render_sections(std::string_view t, const std::map<std::string, bool>& flags) {
    std::string out;
    std::size_t i = 0;
    while (i < t.size()) {
        const std::size_t open = t.find("{{#", i);
        if (open == std::string_view::npos) {
            out.append(t.substr(i));
            break;
        }
        out.append(t.substr(i, open - i));
        const std::size_t name_end = t.find("}}", open);
        if (name_end == std::string_view::npos) throw std::runtime_error("template: unterminated {{# tag");
        const std::string name(t.substr(open + 3, name_end - open - 3));
        const std::string open_tag = "{{#" + name + "}}";
        const std::string close_tag = "{{/" + name + "}}";
        std::size_t depth = 1;
        std::size_t pos = name_end + 2;
        std::size_t close = std::string_view::npos;
        while (depth > 0) {
            const std::size_t no = t.find(open_tag, pos);
            const std::size_t nc = t.find(close_tag, pos);
            if (nc == std::string_view::npos)
                throw std::runtime_error("template: missing " + close_tag);
            if (no != std::string_view::npos && no < nc) {
                ++depth;
                pos = no + open_tag.size();
            } else {
                --depth;
                close = nc;
                pos = nc + close_tag.size();
            }
        }
        const auto it = flags.find(name);
        if (it == flags.end()) throw std::runtime_error("template: unknown section {{#" + name + "}}");
        if (it->second)
            out.append(render_sections(t.substr(name_end + 2, close - (name_end + 2)), flags));
        i = pos;
    }
    return out;
}

inline void replace_all(std::string& text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
}

}  // namespace detail

// Render against a template string. Placeholders: {history}, {context},
// {target_time}, {k}. A placeholder surviving into the output means the
// template references a block the config excluded.
inline PromptText render_prompt(const PredictionSample& sample, const PromptConfig& cfg,
                                const std::string& template_text) {
    validate(cfg);
    const std::map<std::string, bool> flags{{"history", cfg.include_history},
                                            {"context", cfg.include_context},
                                            {"time", cfg.time_aware},
                                            {"guide", cfg.include_guidance},
                                            {"reason", cfg.ask_reason}};
    std::string text = detail::render_sections(template_text, flags);

    detail::replace_all(text, "{k}", std::to_string(cfg.k));
    if (cfg.include_history) detail::replace_all(text, "{history}", serialize_stay_list(sample.history));
    if (cfg.include_context) detail::replace_all(text, "{context}", serialize_stay_list(sample.context));
    if (cfg.time_aware) detail::replace_all(text, "{target_time}", serialize_target(sample.target));

    for (const char* name : {"{history}", "{context}", "{target_time}", "{k}"}) {
        if (text.find(name) != std::string::npos)
            throw PlaceholderUnfilledError(std::string("placeholder ") + name +
                                           " not filled (block excluded by config?)");
    }
    return PromptText{text, hex_digest({cfg.template_id, text, std::to_string(cfg.k)})};
}

// Loads templates/<id>.txt from a directory, caching file contents.
class TemplateLibrary {
public:
    explicit TemplateLibrary(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::string get(const std::string& id) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(id);
        if (it != cache_.end()) return it->second;
        const auto path = dir_ / (id + ".txt");
        std::ifstream in(path);
        if (!in) throw TemplateMissingError("template not found: " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return cache_.emplace(id, ss.str()).first->second;
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex mu_;
    mutable std::map<std::string, std::string> cache_;
};

inline PromptText render_prompt(const PredictionSample& sample, const PromptConfig& cfg,
                                const TemplateLibrary& lib) {
    return render_prompt(sample, cfg, lib.get(cfg.template_id));
}

struct NamedPromptConfig {
    std::string name;
    PromptConfig config;
};

// Full plus the five single-flag ablations. Applying this to the returned
// Full config enumerates the same set.
inline std::vector<NamedPromptConfig> ablation_variants(const PromptConfig& base) {
    std::vector<NamedPromptConfig> out;
    out.push_back({"Full", base});
    auto add = [&](const char* name, auto&& tweak) {
        PromptConfig c = base;
        tweak(c);
        out.push_back({name, c});
    };
    add("NoHistory", [](PromptConfig& c) { c.include_history = false; });
    add("NoContext", [](PromptConfig& c) { c.include_context = false; });
    add("NoTime", [](PromptConfig& c) { c.time_aware = false; });
    add("NoGuide", [](PromptConfig& c) { c.include_guidance = false; });
    add("NoReason", [](PromptConfig& c) { c.ask_reason = false; });
    return out;
}

// ---- Reference extractor ----------------------------------------------------
// Recovers the serialized data blocks from a rendered prompt. This is the
// round-trip check for serialization and the input side of the mock backend.

struct ExtractedPromptData {
    bool has_history = false;
    bool has_context = false;
    std::vector<Stay> history;
    std::vector<Stay> context;
    std::optional<TargetSlot> target;
};

namespace detail {

struct Cursor {
    std::string_view s;
    std::size_t i = 0;

    void skip_ws() {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    }
    bool eat(char c) {
        skip_ws();
        if (i < s.size() && s[i] == c) {
            ++i;
            return true;
        }
        return false;
    }
    std::optional<std::string> quoted() {
        skip_ws();
        if (i >= s.size() || s[i] != '"') return std::nullopt;
        const std::size_t end = s.find('"', i + 1);
        if (end == std::string_view::npos) return std::nullopt;
        std::string out(s.substr(i + 1, end - i - 1));
        i = end + 1;
        return out;
    }
    std::optional<int> integer() {
        skip_ws();
        std::size_t j = i;
        if (j < s.size() && (s[j] == '-' || s[j] == '+')) ++j;
        std::size_t digits = j;
        while (j < s.size() && s[j] >= '0' && s[j] <= '9') ++j;
        if (j == digits) return std::nullopt;
        try {
            const int v = std::stoi(std::string(s.substr(i, j - i)));
            i = j;
            return v;
        } catch (...) {
            return std::nullopt;  // out of int range
        }
    }
};

inline std::optional<Stay> parse_stay_tuple(Cursor& c) {
    if (!c.eat('(')) return std::nullopt;
    auto st = c.quoted();
    if (!st || !c.eat(',')) return std::nullopt;
    auto dow = c.quoted();
    if (!dow || !c.eat(',')) return std::nullopt;
    auto dur = c.integer();
    if (!dur || !c.eat(',')) return std::nullopt;
    auto pid = c.integer();
    if (!pid || !c.eat(')')) return std::nullopt;
    auto minutes = parse_hhmm(*st);
    auto day = weekday_from_name(*dow);
    if (!minutes || !day || *dur < 0 || *pid < 0) return std::nullopt;
    return Stay{*minutes, *day, *dur, *pid};
}

inline std::optional<std::vector<Stay>> parse_stay_list(std::string_view text) {
    Cursor c{text};
    if (!c.eat('[')) return std::nullopt;
    std::vector<Stay> out;
    c.skip_ws();
    if (c.eat(']')) return out;  // empty list
    while (true) {
        auto s = parse_stay_tuple(c);
        if (!s) return std::nullopt;
        out.push_back(*s);
        if (c.eat(']')) break;
        if (!c.eat(',')) return std::nullopt;
    }
    return out;
}

inline std::string_view trim_view(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<TargetSlot> parse_target(std::string_view text) {
    Cursor c{text};
    if (!c.eat('(')) return std::nullopt;
    c.skip_ws();
    const std::size_t comma = text.find(',', c.i);
    const std::size_t close = text.find(')', c.i);
    if (comma == std::string_view::npos || close == std::string_view::npos || close < comma)
        return std::nullopt;
    auto minutes = parse_hhmm(trim_view(text.substr(c.i, comma - c.i)));
    auto day = weekday_from_name(trim_view(text.substr(comma + 1, close - comma - 1)));
    if (!minutes || !day) return std::nullopt;
    return TargetSlot{*minutes, *day};
}

}  // namespace detail

inline std::optional<ExtractedPromptData> extract_prompt_data(const std::string& prompt_text) {
    ExtractedPromptData out;
    std::istringstream lines(prompt_text);
    std::string line;
    bool saw_any = false;
    while (std::getline(lines, line)) {
        auto grab = [&](const char* tag) -> std::optional<std::string_view> {
            std::string_view lv(line);
            const std::string prefix = std::string(tag) + ": ";
            if (lv.rfind(prefix, 0) == 0) return lv.substr(prefix.size());
            return std::nullopt;
        };
        if (auto rest = grab("<history>")) {
            auto stays = detail::parse_stay_list(*rest);
            if (!stays) return std::nullopt;
            out.has_history = true;
            out.history = std::move(*stays);
            saw_any = true;
        } else if (auto rest = grab("<context>")) {
            auto stays = detail::parse_stay_list(*rest);
            if (!stays) return std::nullopt;
            out.has_context = true;
            out.context = std::move(*stays);
            saw_any = true;
        } else if (auto rest = grab("<target_time>")) {
            auto tgt = detail::parse_target(*rest);
            if (!tgt) return std::nullopt;
            out.target = *tgt;
            saw_any = true;
        }
    }
    if (!saw_any) return std::nullopt;
    return out;
}

}  // namespace llmmob
