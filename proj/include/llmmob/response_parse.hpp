#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmmob/backend_types.hpp"
#include "llmmob/hash.hpp"
#include "llmmob/prompt.hpp"

namespace llmmob {

enum class ParseStatus { ok, no_object_found, schema_mismatch, empty_prediction };

inline const char* to_string(ParseStatus s) {
    switch (s) {
        case ParseStatus::ok: return "ok";
        case ParseStatus::no_object_found: return "no_object_found";
        case ParseStatus::schema_mismatch: return "schema_mismatch";
        case ParseStatus::empty_prediction: return "empty_prediction";
    }
    return "?";
}

struct ParseDiagnostics {
    bool had_duplicates = false;
    bool was_truncated = false;
    bool repair_used = false;  // the candidate JSON needed mechanical repair
};

struct RankedPrediction {
    std::vector<int> places;  // deduplicated, length <= k, >= 1 on success
    std::string reason;
    ParseDiagnostics diagnostics;
};

struct ParseResult {
    ParseStatus status = ParseStatus::no_object_found;
    RankedPrediction prediction;  // meaningful iff ok()
    bool ok() const { return status == ParseStatus::ok; }
};

namespace detail {

// Balanced {...} starting at `start`, aware of strings and escapes.
inline std::optional<std::string_view> balanced_object(std::string_view text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (escaped) {
            escaped = false;
            continue;
        }
        if (c == '\\') {
            escaped = in_string;
            continue;
        }
        if (c == '"') {
            in_string = !in_string;
            continue;
        }
        if (in_string) continue;
        if (c == '{') ++depth;
        if (c == '}') {
            --depth;
            if (depth == 0) return text.substr(start, i - start + 1);
        }
    }
    return std::nullopt;
}

// Drops commas that directly precede a closing bracket; the one repair LLM
// output needs often enough to be worth doing inline.
inline std::string strip_trailing_commas(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (!escaped && c == '"' ) in_string = !in_string;
        escaped = in_string && !escaped && c == '\\';
        if (!in_string && c == ',') {
            std::size_t j = i + 1;
            while (j < s.size() && (s[j] == ' ' || s[j] == '\t' || s[j] == '\n' || s[j] == '\r')) ++j;
            if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;  // drop it
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace detail

// Pulls the first balanced top-level object carrying a "prediction" key out of
// the raw text, skipping prose and code fences around it. Scalar predictions
// are coerced to a one-element list; duplicates are dropped keeping the first
// occurrence; anything beyond k is cut. Short lists are left short.
inline ParseResult parse_prediction(const RawResponse& raw, int k) {
    ParseResult result;
    const std::string_view text(raw.text);
    std::size_t pos = 0;
    nlohmann::json obj;
    bool found = false;
    bool repaired = false;
    while ((pos = text.find('{', pos)) != std::string_view::npos) {
        const auto candidate = detail::balanced_object(text, pos);
        if (!candidate) {  // unbalanced from here; a later brace may still work
            pos += 1;
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(*candidate, nullptr, false);
        bool this_repaired = false;
        if (j.is_discarded()) {
            j = nlohmann::json::parse(detail::strip_trailing_commas(*candidate), nullptr, false);
            this_repaired = !j.is_discarded();
        }
        if (!j.is_discarded() && j.is_object() && j.contains("prediction")) {
            obj = std::move(j);
            found = true;
            repaired = this_repaired;
            break;
        }
        // Step inside: a nested object may still carry the key.
        pos += 1;
    }
    if (!found) {
        result.status = ParseStatus::no_object_found;
        return result;
    }

    const auto fits_int = [](const nlohmann::json& e) {
        if (!e.is_number_integer()) return false;
        const auto v = e.get<long long>();
        return v >= std::numeric_limits<int>::min() && v <= std::numeric_limits<int>::max();
    };

    const auto& pred = obj["prediction"];
    std::vector<int> places;
    if (fits_int(pred)) {
        places.push_back(pred.get<int>());
    } else if (pred.is_array()) {
        if (pred.empty()) {
            result.status = ParseStatus::empty_prediction;
            return result;
        }
        for (const auto& e : pred) {
            if (!fits_int(e)) {
                result.status = ParseStatus::schema_mismatch;
                return result;
            }
            places.push_back(e.get<int>());
        }
    } else if (pred.is_number_integer()) {
        result.status = ParseStatus::schema_mismatch;  // integer, but outside int range
        return result;
    } else {
        result.status = ParseStatus::schema_mismatch;
        return result;
    }

    RankedPrediction out;
    out.diagnostics.repair_used = repaired;
    std::set<int> seen;
    for (int p : places) {
        if (seen.insert(p).second) {
            out.places.push_back(p);
        } else {
            out.diagnostics.had_duplicates = true;
        }
    }
    if (static_cast<int>(out.places.size()) > k) {
        out.places.resize(static_cast<std::size_t>(k));
        out.diagnostics.was_truncated = true;
    }
    if (obj.contains("reason") && obj["reason"].is_string()) out.reason = obj["reason"].get<std::string>();

    result.status = ParseStatus::ok;
    result.prediction = std::move(out);
    return result;
}

// One corrective round: original prompt plus the malformed output, quoted and
// bounded, and the schema restated. The runner allows at most one such call
// per sample.
inline PromptText repair_prompt(const PromptText& original, const RawResponse& raw) {
    constexpr std::size_t kQuoteLimit = 600;
    std::string quoted = raw.text.substr(0, kQuoteLimit);
    if (raw.text.size() > kQuoteLimit) quoted += "...";
    std::string text = original.text;
    text += "\n\nYour previous answer could not be parsed. It was:\n";
    text += quoted;
    text += "\nAnswer again with a single JSON object and nothing else: "
            "{\"prediction\": <place IDs, most probable first, as a JSON array (or one bare integer "
            "when a single place is requested)>, \"reason\": <string>}";
    return PromptText{text, hex_digest({"repair", original.prompt_hash, text})};
}

}  // namespace llmmob
