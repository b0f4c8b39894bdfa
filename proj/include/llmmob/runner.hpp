#pragma once

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmmob/baselines.hpp"
#include "llmmob/config.hpp"
#include "llmmob/gateway.hpp"
#include "llmmob/ingest.hpp"
#include "llmmob/metrics.hpp"
#include "llmmob/mock_backend.hpp"
#include "llmmob/prompt.hpp"
#include "llmmob/response_parse.hpp"
#include "llmmob/stays.hpp"

namespace llmmob {

// One line of the results JSONL. Self-contained: evaluation recomputes the
// hit rank from places + ground_truth and never trusts the stored one.
struct SampleRecord {
    std::string sample_id;
    std::string prompt_hash;  // empty for baseline predictors
    std::string raw_text;     // model output, or "<baseline>" marker
    std::vector<int> places;
    std::string reason;
    int ground_truth = 0;
    std::optional<int> hit_rank;
    double latency_ms = 0.0;  // excluded from determinism comparisons
    nlohmann::json diagnostics = nlohmann::json::object();
};

inline nlohmann::json to_json(const SampleRecord& r) {
    nlohmann::json j{{"type", "sample"},
                     {"sample_id", r.sample_id},
                     {"prompt_hash", r.prompt_hash},
                     {"raw_text", r.raw_text},
                     {"places", r.places},
                     {"reason", r.reason},
                     {"ground_truth", r.ground_truth},
                     {"latency_ms", r.latency_ms},
                     {"diagnostics", r.diagnostics}};
    if (r.hit_rank)
        j["hit_rank"] = *r.hit_rank;
    else
        j["hit_rank"] = nullptr;
    return j;
}

inline std::optional<SampleRecord> record_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("type", "") != "sample") return std::nullopt;
    if (!j.contains("sample_id") || !j.contains("places") || !j.contains("ground_truth"))
        return std::nullopt;
    if (!j["sample_id"].is_string() || !j["places"].is_array() ||
        !j["ground_truth"].is_number_integer())
        return std::nullopt;
    SampleRecord r;
    r.sample_id = j["sample_id"].get<std::string>();
    r.prompt_hash = j.value("prompt_hash", "");
    r.raw_text = j.value("raw_text", "");
    for (const auto& e : j["places"]) {
        if (!e.is_number_integer()) return std::nullopt;
        r.places.push_back(e.get<int>());
    }
    r.reason = j.value("reason", "");
    r.ground_truth = j["ground_truth"].get<int>();
    if (j.contains("hit_rank") && j["hit_rank"].is_number_integer())
        r.hit_rank = j["hit_rank"].get<int>();
    r.latency_ms = j.value("latency_ms", 0.0);
    if (j.contains("diagnostics") && j["diagnostics"].is_object()) r.diagnostics = j["diagnostics"];
    return r;
}

struct PreparedData {
    std::vector<PredictionSample> samples;                 // sorted by sample_id
    std::map<std::string, std::vector<Stay>> train_prefix; // user -> stays before the test block
    std::size_t dropped_users = 0;
    int skipped_empty_context = 0;
};

namespace detail {

// Portable Fisher-Yates so a seed means the same subset everywhere.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, unsigned seed) {
    std::uint64_t state = seed ? seed : 0x9e3779b97f4a7c15ull;
    auto next = [&state]() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        return state;
    };
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(next() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace detail

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
    if (cfg.data.stays_path.empty()) throw std::runtime_error("data.stays_path is not set");
    const auto seqs =
        load_stays(cfg.data.stays_path, cfg.data.format, cfg.ingest.utc_offset_minutes);
    PreparedData out;
    for (const auto& seq : seqs) {
        const auto split = split_train_test(seq, cfg.ingest.test_fraction, cfg.ingest.min_stays_per_user);
        if (!split) {
            ++out.dropped_users;
            continue;
        }
        out.train_prefix[seq.user_id] = std::vector<Stay>(
            seq.stays.begin(), seq.stays.begin() + static_cast<std::ptrdiff_t>(split->first_test_index));
        const std::set<std::size_t> targets(split->test_targets.begin(), split->test_targets.end());
        auto built = build_samples(seq, cfg.window, targets);
        out.skipped_empty_context += built.skipped_empty_context;
        for (auto& s : built.samples) out.samples.push_back(std::move(s));
    }
    std::sort(out.samples.begin(), out.samples.end(),
              [](const PredictionSample& a, const PredictionSample& b) { return a.sample_id < b.sample_id; });
    if (cfg.sample_limit && *cfg.sample_limit < out.samples.size()) {
        detail::deterministic_shuffle(out.samples, cfg.seed);
        out.samples.resize(*cfg.sample_limit);
        std::sort(out.samples.begin(), out.samples.end(),
                  [](const PredictionSample& a, const PredictionSample& b) {
                      return a.sample_id < b.sample_id;
                  });
    }
    return out;
}

namespace detail {

inline nlohmann::json make_meta(const ExperimentConfig& cfg, Predictor effective) {
    return nlohmann::json{{"type", "meta"},
                          {"schema", 1},
                          {"predictor", to_string(effective)},
                          {"k", cfg.prompt.k},
                          {"template_id", cfg.prompt.template_id},
                          {"model_id", effective == Predictor::llm ? cfg.backend.model_id
                                                                   : to_string(effective)},
                          {"temperature", cfg.backend.temperature},
                          {"time_aware", cfg.prompt.time_aware},
                          {"include_history", cfg.prompt.include_history},
                          {"include_context", cfg.prompt.include_context},
                          {"include_guidance", cfg.prompt.include_guidance},
                          {"ask_reason", cfg.prompt.ask_reason}};
}

struct LoadedResults {
    nlohmann::json meta;  // null when absent
    std::map<std::string, SampleRecord> by_id;  // last record wins
    std::size_t corrupt_lines = 0;
    std::vector<std::string> corrupt_messages;
    bool ends_with_newline = true;
    bool exists = false;
};

inline LoadedResults load_results(const std::string& path) {
    LoadedResults out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    out.exists = true;
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string content = ss.str();
    out.ends_with_newline = content.empty() || content.back() == '\n';
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string::npos) end = content.size();
        const std::string line = content.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            ++out.corrupt_lines;
            out.corrupt_messages.push_back("line " + std::to_string(lineno) + ": unparseable");
            continue;
        }
        const std::string type = j.value("type", "");
        if (type == "meta") {
            out.meta = j;
        } else if (auto rec = record_from_json(j)) {
            out.by_id[rec->sample_id] = std::move(*rec);
        } else {
            ++out.corrupt_lines;
            out.corrupt_messages.push_back("line " + std::to_string(lineno) + ": bad record");
        }
    }
    return out;
}

}  // namespace detail

struct RunSummary {
    std::string results_path;
    std::size_t total_samples = 0;
    std::size_t resumed = 0;          // already present in the results file
    std::size_t newly_processed = 0;
    std::size_t failures = 0;         // samples without a usable prediction
    std::size_t backend_calls = 0;    // completion requests issued (incl. repairs)
    std::size_t repair_rounds = 0;
    std::size_t dropped_users = 0;
    int skipped_empty_context = 0;
};

inline std::string summary_line(const RunSummary& s) {
    std::ostringstream os;
    os << "wrote " << s.results_path << ": " << s.total_samples << " samples (" << s.resumed
       << " resumed, " << s.newly_processed << " new, " << s.failures << " failed), "
       << s.backend_calls << " backend calls, " << s.repair_rounds << " repair rounds, "
       << s.dropped_users << " users dropped, " << s.skipped_empty_context
       << " targets without context";
    return os.str();
}

// Runs one experiment end to end, appending records for samples missing from
// the results file and compacting it (meta first, records sorted by
// sample_id) on completion. Per-sample problems are recorded, never fatal;
// config, template, and auth problems are.
inline RunSummary run_experiment(const ExperimentConfig& cfg_in, const std::string& run_name = "") {
    ExperimentConfig cfg = cfg_in;
    validate(cfg.prompt);
    validate(cfg.backend);

    Predictor effective = cfg.predictor;
    if (effective == Predictor::llm) {
        if (const char* nn = std::getenv("NO_NETWORK"); nn && std::string(nn) != "0") {
            std::cerr << "NO_NETWORK is set: forcing the mock predictor\n";
            effective = Predictor::mock;
        }
    }

    std::filesystem::create_directories(cfg.output_dir);
    const std::string name = !run_name.empty()
                                 ? run_name
                                 : std::string("results_") + to_string(effective) + "_k" +
                                       std::to_string(cfg.prompt.k);
    const std::string path = (std::filesystem::path(cfg.output_dir) / (name + ".jsonl")).string();

    const bool uses_prompts = effective == Predictor::llm || effective == Predictor::mock;
    TemplateLibrary templates{cfg.template_dir};
    if (uses_prompts) templates.get(cfg.prompt.template_id);  // fail fast on a missing template

    PreparedData data = prepare_data(cfg);

    RunSummary summary;
    summary.results_path = path;
    summary.total_samples = data.samples.size();
    summary.dropped_users = data.dropped_users;
    summary.skipped_empty_context = data.skipped_empty_context;

    const nlohmann::json meta = detail::make_meta(cfg, effective);
    auto existing = detail::load_results(path);
    if (existing.exists && !existing.meta.is_null()) {
        nlohmann::json theirs = existing.meta;
        if (theirs != meta)
            throw std::runtime_error(path + " belongs to a different experiment; refusing to mix runs");
    }

    std::vector<const PredictionSample*> todo;
    for (const auto& s : data.samples) {
        if (existing.by_id.count(s.sample_id))
            ++summary.resumed;
        else
            todo.push_back(&s);
    }

    // Baseline models are fit up front on each user's pre-test prefix.
    std::map<std::string, TransitionModel> models;
    if (effective == Predictor::one_mmc || effective == Predictor::topfreq) {
        for (const auto& [user, prefix] : data.train_prefix) models[user] = fit_1mmc(prefix);
    }

    std::optional<HttpGateway> gateway;
    if (effective == Predictor::llm) gateway.emplace(cfg.backend);

    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot open results file for append: " + path);
    if (existing.exists && !existing.ends_with_newline) out << "\n";  // heal a torn tail
    if (!existing.exists || existing.meta.is_null()) out << meta.dump() << "\n";
    out.flush();

    std::mutex write_mu;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> failures{0}, backend_calls{0}, repair_rounds{0};
    std::exception_ptr fatal;
    std::mutex fatal_mu;
    std::atomic<bool> abort{false};

    auto complete_once = [&](const PromptText& prompt) -> RawResponse {
        ++backend_calls;
        if (effective == Predictor::mock) return mock_complete(prompt, cfg.prompt.k);
        return gateway->complete(prompt);
    };

    auto process = [&](const PredictionSample& sample) {
        SampleRecord rec;
        rec.sample_id = sample.sample_id;
        rec.ground_truth = sample.ground_truth;
        rec.diagnostics["predictor"] = to_string(effective);

        if (uses_prompts) {
            const auto started = std::chrono::steady_clock::now();
            const PromptText prompt = render_prompt(sample, cfg.prompt, templates);
            rec.prompt_hash = prompt.prompt_hash;
            ParseResult parsed;
            bool repair_round = false;
            try {
                RawResponse raw = complete_once(prompt);
                parsed = parse_prediction(raw, cfg.prompt.k);
                if (!parsed.ok()) {
                    repair_round = true;
                    ++repair_rounds;
                    raw = complete_once(repair_prompt(prompt, raw));
                    parsed = parse_prediction(raw, cfg.prompt.k);
                }
                rec.raw_text = raw.text;
                rec.diagnostics["attempts"] = raw.attempt_count;
                rec.diagnostics["from_cache"] = raw.from_cache;
                rec.diagnostics["parse_status"] = to_string(parsed.status);
            } catch (const GatewayError& e) {
                if (e.kind == GatewayErrorKind::auth) throw;  // fatal: every sample would fail
                rec.diagnostics["parse_status"] = "no_response";
                rec.diagnostics["error"] = e.what();
            } catch (const ExtractionFailedError& e) {
                rec.diagnostics["parse_status"] = "no_response";
                rec.diagnostics["error"] = e.what();
            }
            rec.diagnostics["repair_round"] = repair_round;
            if (parsed.ok()) {
                rec.places = parsed.prediction.places;
                rec.reason = parsed.prediction.reason;
                rec.diagnostics["had_duplicates"] = parsed.prediction.diagnostics.had_duplicates;
                rec.diagnostics["was_truncated"] = parsed.prediction.diagnostics.was_truncated;
                rec.diagnostics["repair_used"] = parsed.prediction.diagnostics.repair_used;
            } else {
                ++failures;
            }
            rec.latency_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                    .count();
        } else {
            rec.raw_text = "<baseline>";
            const auto it = models.find(sample.user_id);
            if (it != models.end()) {
                if (effective == Predictor::one_mmc) {
                    const int current = sample.context.back().place_id;
                    rec.places = predict_1mmc(it->second, current, cfg.prompt.k);
                } else {
                    rec.places = predict_topfreq(it->second, cfg.prompt.k);
                }
            }
            if (rec.places.empty()) ++failures;  // empty training prefix
        }

        rec.hit_rank = find_hit_rank(rec.places, rec.ground_truth);
        const nlohmann::json line = to_json(rec);
        {
            std::lock_guard<std::mutex> lock(write_mu);
            out << line.dump() << "\n";
            out.flush();
        }
    };

    const std::size_t workers =
        std::min<std::size_t>(std::max(1, cfg.backend.max_in_flight), std::max<std::size_t>(todo.size(), 1));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (!abort.load()) {
                const std::size_t i = next.fetch_add(1);
                if (i >= todo.size()) break;
                try {
                    process(*todo[i]);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(fatal_mu);
                    if (!fatal) fatal = std::current_exception();
                    abort.store(true);
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    out.close();
    if (fatal) std::rethrow_exception(fatal);

    summary.newly_processed = todo.size();
    summary.failures = failures.load();
    summary.backend_calls = backend_calls.load();
    summary.repair_rounds = repair_rounds.load();

    // Compact: meta first, records sorted by sample_id, duplicates and torn
    // lines gone. Atomic rename keeps the file valid at every instant.
    auto final_state = detail::load_results(path);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream compacted(tmp, std::ios::binary | std::ios::trunc);
        compacted << meta.dump() << "\n";
        for (const auto& [_, rec] : final_state.by_id) compacted << to_json(rec).dump() << "\n";
    }
    std::filesystem::rename(tmp, path);
    return summary;
}

struct EvaluateResult {
    MetricsReport report;
    int k = 10;
    std::size_t corrupt_lines = 0;
    std::vector<std::string> corrupt_messages;
    nlohmann::json meta;
};

// Rebuilds the metric inputs from the results file alone. Stored hit ranks
// are ignored; places + ground_truth are the contract.
inline EvaluateResult evaluate(const std::string& results_path) {
    auto loaded = detail::load_results(results_path);
    if (!loaded.exists) throw std::runtime_error("no such results file: " + results_path);
    if (loaded.by_id.empty()) throw std::runtime_error("no records in: " + results_path);

    EvaluateResult out;
    out.meta = loaded.meta;
    out.corrupt_lines = loaded.corrupt_lines;
    out.corrupt_messages = loaded.corrupt_messages;
    out.k = loaded.meta.is_object() ? loaded.meta.value("k", 10) : 10;

    std::vector<ScoredSample> scored;
    scored.reserve(loaded.by_id.size());
    std::size_t parse_failures = 0;
    for (const auto& [id, rec] : loaded.by_id) {
        scored.push_back(make_scored(id, rec.places, rec.ground_truth));
        const auto status = rec.diagnostics.value("parse_status", "ok");
        if (status != "ok") ++parse_failures;
    }
    out.report = compute_report(scored, parse_failures, out.k);
    return out;
}

struct ReportRow {
    std::string name;
    MetricsReport report;
};

inline std::string render_report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "name,acc1,acc5,acc10,weighted_f1,ndcg10,parse_failure_rate,n_samples\n";
    for (const auto& r : rows) {
        out += r.name + ",";
        out += detail::fmt_metric(r.report.acc1) + ",";
        out += detail::fmt_metric(r.report.acc5) + ",";
        out += detail::fmt_metric(r.report.acc10) + ",";
        out += detail::fmt_metric(r.report.weighted_f1) + ",";
        out += detail::fmt_metric(r.report.ndcg10) + ",";
        out += detail::fmt_metric(r.report.parse_failure_rate) + ",";
        out += std::to_string(r.report.n_samples) + "\n";
    }
    return out;
}

inline std::string render_report_text(const std::vector<ReportRow>& rows) {
    std::size_t name_w = 9;
    for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
    std::ostringstream os;
    os << std::left;
    auto cell = [](const std::string& s) {
        std::string c = s;
        c.resize(std::max<std::size_t>(c.size(), 8), ' ');
        return c + "  ";
    };
    os.width(static_cast<std::streamsize>(name_w + 2));
    os << "predictor";
    os << cell("acc1") << cell("acc5") << cell("acc10") << cell("w_f1") << cell("ndcg10")
       << cell("pfail") << "n\n";
    for (const auto& r : rows) {
        os.width(static_cast<std::streamsize>(name_w + 2));
        os << r.name;
        os << cell(detail::fmt_metric(r.report.acc1)) << cell(detail::fmt_metric(r.report.acc5))
           << cell(detail::fmt_metric(r.report.acc10)) << cell(detail::fmt_metric(r.report.weighted_f1))
           << cell(detail::fmt_metric(r.report.ndcg10))
           << cell(detail::fmt_metric(r.report.parse_failure_rate)) << r.report.n_samples << "\n";
    }
    return os.str();
}

struct AblationRow {
    std::string name;
    std::string results_path;
    std::optional<MetricsReport> report;
    std::string error;  // non-empty when the variant failed
};

// Runs all six prompt variants over identical data and backend. A failing
// variant is reported and does not stop the others.
inline std::vector<AblationRow> ablate(const ExperimentConfig& base_cfg) {
    std::vector<AblationRow> rows;
    for (const auto& variant : ablation_variants(base_cfg.prompt)) {
        AblationRow row;
        row.name = variant.name;
        ExperimentConfig cfg = base_cfg;
        cfg.prompt = variant.config;
        try {
            const auto summary = run_experiment(cfg, "ablate_" + variant.name);
            row.results_path = summary.results_path;
            row.report = evaluate(summary.results_path).report;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// Prompt, raw model text, parsed ranking and reason for one sample, side by
// side, for qualitative inspection.
inline std::string casestudy_text(const ExperimentConfig& cfg, const std::string& sample_id,
                                  const std::string& results_path) {
    PreparedData data = prepare_data(cfg);
    const PredictionSample* sample = nullptr;
    for (const auto& s : data.samples) {
        if (s.sample_id == sample_id) {
            sample = &s;
            break;
        }
    }
    if (!sample) throw std::runtime_error("sample not found: " + sample_id);

    std::ostringstream os;
    os << "=== sample " << sample_id << " ===\n";
    os << "ground truth: " << sample->ground_truth << "\n";
    os << "target: " << serialize_target(sample->target) << "\n\n";

    TemplateLibrary templates{cfg.template_dir};
    const PromptText prompt = render_prompt(*sample, cfg.prompt, templates);
    os << "--- prompt (" << prompt.prompt_hash << ") ---\n" << prompt.text << "\n";

    if (!results_path.empty()) {
        const auto loaded = detail::load_results(results_path);
        const auto it = loaded.by_id.find(sample_id);
        if (it == loaded.by_id.end()) {
            os << "--- no record in " << results_path << " ---\n";
        } else {
            const auto& rec = it->second;
            os << "--- raw response ---\n" << rec.raw_text << "\n";
            os << "--- parsed ---\nplaces: [";
            for (std::size_t i = 0; i < rec.places.size(); ++i) {
                if (i) os << ", ";
                os << rec.places[i];
            }
            os << "]\n";
            const auto rank = find_hit_rank(rec.places, rec.ground_truth);
            os << "hit rank: " << (rank ? std::to_string(*rank) : "miss") << "\n";
            os << "reason: " << rec.reason << "\n";
            os << "diagnostics: " << rec.diagnostics.dump() << "\n";
        }
    }
    return os.str();
}

}  // namespace llmmob
