#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "llmmob/backend_types.hpp"
#include "llmmob/ingest.hpp"
#include "llmmob/prompt.hpp"
#include "llmmob/stays.hpp"

namespace llmmob {

// Flat "key = value" file, one entry per line, '#' lines are comments. Keys
// are dotted to mirror the nested config structs.
class KeyValueConfig {
public:
    static KeyValueConfig from_string(const std::string& text) {
        KeyValueConfig kv;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = detail::trim(t.substr(0, eq));
            const std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
            kv.values_[key] = value;
        }
        return kv;
    }

    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str());
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end() || it->second.empty()) return std::nullopt;
        return it->second;
    }

    std::string get_str(const std::string& key, const std::string& dflt) const {
        auto v = get(key);
        return v ? *v : dflt;
    }

    long long get_int(const std::string& key, long long dflt) const {
        auto v = get(key);
        if (!v) return dflt;
        try {
            return std::stoll(*v);
        } catch (...) {
            throw std::runtime_error("config key '" + key + "': not an integer: " + *v);
        }
    }

    double get_double(const std::string& key, double dflt) const {
        auto v = get(key);
        if (!v) return dflt;
        try {
            return std::stod(*v);
        } catch (...) {
            throw std::runtime_error("config key '" + key + "': not a number: " + *v);
        }
    }

    bool get_bool(const std::string& key, bool dflt) const {
        auto v = get(key);
        if (!v) return dflt;
        std::string s = *v;
        std::transform(s.begin(), s.end(), s.begin(), ::tolower);
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        throw std::runtime_error("config key '" + key + "': not a boolean: " + *v);
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

enum class Predictor { llm, mock, one_mmc, topfreq };

inline const char* to_string(Predictor p) {
    switch (p) {
        case Predictor::llm: return "llm";
        case Predictor::mock: return "mock";
        case Predictor::one_mmc: return "1mmc";
        case Predictor::topfreq: return "topfreq";
    }
    return "?";
}

inline Predictor predictor_from_string(const std::string& s) {
    if (s == "llm") return Predictor::llm;
    if (s == "mock") return Predictor::mock;
    if (s == "1mmc") return Predictor::one_mmc;
    if (s == "topfreq") return Predictor::topfreq;
    throw std::runtime_error("unknown predictor: " + s + " (expected llm|mock|1mmc|topfreq)");
}

struct DataConfig {
    std::string stays_path;
    StayFileFormat format = StayFileFormat::csv;
    std::string points_path;  // track points, for the ingest subcommand
};

struct ExperimentConfig {
    DataConfig data;
    IngestConfig ingest;
    WindowConfig window;
    PromptConfig prompt;
    BackendConfig backend;
    Predictor predictor = Predictor::mock;
    std::string template_dir = "templates";
    std::string output_dir = "out";
    unsigned seed = 7;
    std::optional<std::size_t> sample_limit;
};

inline ExperimentConfig experiment_from_kv(const KeyValueConfig& kv) {
    static const std::set<std::string> known{
        "data.stays_path",      "data.format",          "data.points_path",
        "ingest.stay_radius_m", "ingest.stay_min_duration_min", "ingest.place_cluster_radius_m",
        "ingest.test_fraction", "ingest.min_stays_per_user",    "ingest.utc_offset_minutes",
        "window.history_len",   "window.context_len",
        "prompt.k",             "prompt.time_aware",    "prompt.include_history",
        "prompt.include_context", "prompt.include_guidance", "prompt.ask_reason",
        "prompt.template_id",
        "backend.endpoint_url", "backend.model_id",     "backend.temperature",
        "backend.max_retries",  "backend.timeout_s",    "backend.max_in_flight",
        "backend.cache_dir",    "backend.api_key_env",  "backend.retry_initial_delay_ms",
        "predictor",            "template_dir",         "output_dir",
        "seed",                 "sample_limit"};
    for (const auto& [key, _] : kv.entries()) {
        if (!known.count(key)) throw std::runtime_error("unknown config key: " + key);
    }

    ExperimentConfig cfg;
    cfg.data.stays_path = kv.get_str("data.stays_path", "");
    const std::string fmt = kv.get_str("data.format", "csv");
    if (fmt == "csv")
        cfg.data.format = StayFileFormat::csv;
    else if (fmt == "jsonl")
        cfg.data.format = StayFileFormat::jsonl;
    else
        throw std::runtime_error("data.format must be csv or jsonl");
    cfg.data.points_path = kv.get_str("data.points_path", "");

    cfg.ingest.stay_radius_m = kv.get_double("ingest.stay_radius_m", cfg.ingest.stay_radius_m);
    cfg.ingest.stay_min_duration_min =
        static_cast<int>(kv.get_int("ingest.stay_min_duration_min", cfg.ingest.stay_min_duration_min));
    cfg.ingest.place_cluster_radius_m =
        kv.get_double("ingest.place_cluster_radius_m", cfg.ingest.place_cluster_radius_m);
    cfg.ingest.test_fraction = kv.get_double("ingest.test_fraction", cfg.ingest.test_fraction);
    cfg.ingest.min_stays_per_user =
        static_cast<int>(kv.get_int("ingest.min_stays_per_user", cfg.ingest.min_stays_per_user));
    cfg.ingest.utc_offset_minutes =
        static_cast<int>(kv.get_int("ingest.utc_offset_minutes", cfg.ingest.utc_offset_minutes));

    cfg.window.history_len = static_cast<int>(kv.get_int("window.history_len", cfg.window.history_len));
    cfg.window.context_len = static_cast<int>(kv.get_int("window.context_len", cfg.window.context_len));

    cfg.prompt.k = static_cast<int>(kv.get_int("prompt.k", cfg.prompt.k));
    cfg.prompt.time_aware = kv.get_bool("prompt.time_aware", cfg.prompt.time_aware);
    cfg.prompt.include_history = kv.get_bool("prompt.include_history", cfg.prompt.include_history);
    cfg.prompt.include_context = kv.get_bool("prompt.include_context", cfg.prompt.include_context);
    cfg.prompt.include_guidance = kv.get_bool("prompt.include_guidance", cfg.prompt.include_guidance);
    cfg.prompt.ask_reason = kv.get_bool("prompt.ask_reason", cfg.prompt.ask_reason);
    cfg.prompt.template_id = kv.get_str("prompt.template_id", cfg.prompt.template_id);

    cfg.backend.endpoint_url = kv.get_str("backend.endpoint_url", cfg.backend.endpoint_url);
    cfg.backend.model_id = kv.get_str("backend.model_id", cfg.backend.model_id);
    cfg.backend.temperature = kv.get_double("backend.temperature", cfg.backend.temperature);
    cfg.backend.max_retries = static_cast<int>(kv.get_int("backend.max_retries", cfg.backend.max_retries));
    cfg.backend.timeout_s = kv.get_double("backend.timeout_s", cfg.backend.timeout_s);
    cfg.backend.max_in_flight =
        static_cast<int>(kv.get_int("backend.max_in_flight", cfg.backend.max_in_flight));
    cfg.backend.cache_dir = kv.get_str("backend.cache_dir", cfg.backend.cache_dir);
    cfg.backend.api_key_env = kv.get_str("backend.api_key_env", cfg.backend.api_key_env);
    cfg.backend.retry_initial_delay_ms = static_cast<int>(
        kv.get_int("backend.retry_initial_delay_ms", cfg.backend.retry_initial_delay_ms));

    cfg.predictor = predictor_from_string(kv.get_str("predictor", "mock"));
    cfg.template_dir = kv.get_str("template_dir", cfg.template_dir);
    cfg.output_dir = kv.get_str("output_dir", cfg.output_dir);
    cfg.seed = static_cast<unsigned>(kv.get_int("seed", cfg.seed));
    if (kv.get("sample_limit"))
        cfg.sample_limit = static_cast<std::size_t>(kv.get_int("sample_limit", 0));

    validate(cfg.window);
    validate(cfg.prompt);
    validate(cfg.backend);
    validate(cfg.ingest);
    return cfg;
}

}  // namespace llmmob
