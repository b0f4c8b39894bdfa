// Acceptance suite: one criterion per function, one pass/fail line each.
// Exit code is non-zero when any criterion fails; skipped criteria (the
// optional live smoke without credentials) do not fail the run.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "llmmob/llmmob.hpp"
#include "../test_support.hpp"

using namespace llmmob;

namespace {

struct CriterionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CriterionSkip : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw CriterionFailure(msg);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const std::string kTemplatesDir = LLMMOB_TEMPLATES_DIR;
const std::string kFixturesDir = LLMMOB_FIXTURES_DIR;
const std::string kDataDir = LLMMOB_DATA_DIR;

// ---------------------------------------------------------------------------
// 1. Metrics oracle equivalence

double ndcg_bruteforce(const std::vector<ScoredSample>& samples, int k) {
    double total = 0.0;
    for (const auto& s : samples) {
        std::vector<int> r(static_cast<std::size_t>(k), 0);
        for (std::size_t j = 0; j < s.places.size() && j < static_cast<std::size_t>(k); ++j)
            if (s.places[j] == s.ground_truth) r[j] = 1;
        double dcg = 0.0;
        for (int j = 1; j <= k; ++j) dcg += r[static_cast<std::size_t>(j - 1)] / std::log2(j + 1.0);
        total += dcg;  // IDCG = 1 for single relevance
    }
    return total / static_cast<double>(samples.size());
}

std::vector<ScoredSample> random_scored(test::Rng& rng, std::size_t n) {
    std::vector<ScoredSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const int truth = static_cast<int>(rng.below(40));
        std::vector<int> places;
        if (rng.below(12) != 0) {
            std::set<int> used;
            const int len = static_cast<int>(rng.below(14));
            for (int j = 0; j < len; ++j) {
                const int p = static_cast<int>(rng.below(40));
                if (used.insert(p).second) places.push_back(p);
            }
        }
        out.push_back(make_scored("s" + std::to_string(i), std::move(places), truth));
    }
    return out;
}

void criterion_metrics_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    test::Rng rng(20240517);
    const auto big = random_scored(rng, 1000);
    for (int k : {1, 3, 5, 10}) {
        const double got = ndcg_at_k(big, k);
        const double want = ndcg_bruteforce(big, k);
        require(std::abs(got - want) <= 1e-12,
                "ndcg@" + std::to_string(k) + " deviates from the brute-force evaluator");
    }
    for (int trial = 0; trial < 30; ++trial) {
        const auto set = random_scored(rng, 100);
        const double a1 = acc_at_k(set, 1), a5 = acc_at_k(set, 5), a10 = acc_at_k(set, 10);
        require(a1 <= a5 && a5 <= a10, "Acc@1 <= Acc@5 <= Acc@10 violated");
        require(std::abs(ndcg_at_k(set, 10) - ndcg_bruteforce(set, 10)) <= 1e-12,
                "ndcg mismatch on a generated set");
    }
    require(seconds_since(t0) < 5.0, "metrics oracle run exceeded 5 s");
}

// ---------------------------------------------------------------------------
// 2. Analytic metric anchors

void criterion_metric_anchors() {
    require(ndcg_at_k({make_scored("a", {7}, 7)}, 10) == 1.0, "hit at rank 1 must score 1.0");
    require(ndcg_at_k({make_scored("b", {1, 2, 7}, 7)}, 10) == 0.5,
            "hit at rank 3 must score exactly 0.5");
    const std::vector<ScoredSample> f1_case{make_scored("x", {1}, 1), make_scored("y", {2}, 1),
                                            make_scored("z", {2}, 2)};
    require(std::abs(weighted_f1(f1_case) - 2.0 / 3.0) <= 1e-12,
            "weighted F1 of truths [1,1,2] vs predictions [1,2,2] must be 2/3");
}

// ---------------------------------------------------------------------------
// 3. 1-MMC recovery

void criterion_mmc_recovery() {
    const auto t0 = std::chrono::steady_clock::now();
    constexpr int kStates = 5;
    const double gen[kStates][kStates] = {{0.0, 0.6, 0.4, 0.0, 0.0},
                                          {0.5, 0.0, 0.0, 0.5, 0.0},
                                          {0.3, 0.0, 0.0, 0.0, 0.7},
                                          {0.0, 0.4, 0.0, 0.0, 0.6},
                                          {0.7, 0.0, 0.3, 0.0, 0.0}};
    test::Rng rng(777001);
    std::vector<Stay> walk{Stay{0, Weekday::Monday, 1, 0}};
    int state = 0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.unit();
        double acc = 0.0;
        int next = kStates - 1;
        for (int s = 0; s < kStates; ++s) {
            acc += gen[state][s];
            if (u < acc) {
                next = s;
                break;
            }
        }
        state = next;
        walk.push_back(Stay{0, Weekday::Monday, 1, state});
    }
    const auto model = fit_1mmc(walk);
    for (int origin = 0; origin < kStates; ++origin) {
        double l1 = 0.0;
        for (int s = 0; s < kStates; ++s) {
            double fitted = 0.0;
            for (const auto& c : model.successors.at(origin))
                if (c.place_id == s) fitted = c.probability;
            l1 += std::abs(fitted - gen[origin][s]);
        }
        require(l1 < 0.05, "row " + std::to_string(origin) + " L1 distance " + std::to_string(l1) +
                               " >= 0.05");
    }

    std::vector<Stay> cycle;
    for (int i = 0; i < 400; ++i) cycle.push_back(Stay{0, Weekday::Monday, 1, i % 4});
    const auto cyclic = fit_1mmc(cycle);
    std::vector<ScoredSample> scored;
    for (int i = 0; i + 1 < 400; ++i)
        scored.push_back(make_scored(std::to_string(i),
                                     predict_1mmc(cyclic, cycle[static_cast<std::size_t>(i)].place_id, 1),
                                     cycle[static_cast<std::size_t>(i + 1)].place_id));
    require(acc_at_k(scored, 1) == 1.0, "deterministic cycle must hit Acc@1 = 1.0 exactly");
    require(seconds_since(t0) < 5.0, "1-MMC recovery exceeded 5 s");
}

// ---------------------------------------------------------------------------
// 4. Window correctness + leakage scan

void criterion_windows() {
    UserSequence seq;
    seq.user_id = "w";
    for (int i = 0; i < 46; ++i) {
        seq.stays.push_back(Stay{(i * 13) % 1440, static_cast<Weekday>(i % 7), 10 + i, i});
        seq.absolute_seconds.push_back(static_cast<std::int64_t>(i) * 3600);
    }
    const auto built = build_samples(seq, WindowConfig{40, 5}, {45});
    require(built.samples.size() == 1, "fixture must yield one sample");
    const auto& s = built.samples[0];
    require(s.history.size() == 40 && s.history.front().place_id == 0 &&
                s.history.back().place_id == 39,
            "history must be indices 0..39");
    require(s.context.size() == 5 && s.context.front().place_id == 40 &&
                s.context.back().place_id == 44,
            "context must be indices 40..44");
    require(s.ground_truth == 45, "target must be index 45");

    // leakage scan: windows over index-valued stays may never reach the target
    test::Rng rng(6060);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(200));
        UserSequence u;
        u.user_id = "scan";
        for (int i = 0; i < n; ++i) {
            u.stays.push_back(Stay{0, Weekday::Monday, 1, i});
            u.absolute_seconds.push_back(i);
        }
        std::set<std::size_t> targets;
        for (int j = 0; j < 5; ++j)
            targets.insert(1 + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - 1))));
        const int M = 1 + static_cast<int>(rng.below(60));
        const int N = 1 + static_cast<int>(rng.below(8));
        for (const auto& sample : build_samples(u, WindowConfig{M, N}, targets).samples) {
            const int t = sample.ground_truth;  // equals the target index here
            for (const auto& st : sample.history)
                require(st.place_id < t, "history leaked a future stay");
            for (const auto& st : sample.context)
                require(st.place_id < t, "context leaked a future stay");
            require(static_cast<int>(sample.history.size()) <= M, "history exceeds M");
            require(!sample.context.empty() && static_cast<int>(sample.context.size()) <= N,
                    "context size out of bounds");
        }
    }
}

// ---------------------------------------------------------------------------
// 5. Prompt golden tests

PredictionSample golden_sample() {
    PredictionSample s;
    s.sample_id = "u1#00045";
    s.user_id = "u1";
    s.history = {
        Stay{1050, Weekday::Tuesday, 35, 1},  Stay{480, Weekday::Wednesday, 510, 2},
        Stay{1110, Weekday::Wednesday, 645, 0}, Stay{485, Weekday::Thursday, 500, 2},
        Stay{1140, Weekday::Thursday, 610, 0},  Stay{510, Weekday::Friday, 180, 2},
        Stay{750, Weekday::Friday, 90, 3},      Stay{1170, Weekday::Friday, 600, 0},
    };
    s.context = {
        Stay{540, Weekday::Thursday, 480, 2},
        Stay{1080, Weekday::Thursday, 660, 0},
        Stay{520, Weekday::Friday, 300, 2},
    };
    s.target = TargetSlot{913, Weekday::Friday};
    s.ground_truth = 1;
    return s;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::string line;
    std::istringstream ss(text);
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

void criterion_prompt_goldens() {
    TemplateLibrary lib(kTemplatesDir);
    const auto sample = golden_sample();
    const auto variants = ablation_variants(PromptConfig{});
    std::string full_text;
    for (const auto& variant : variants) {
        const auto text = render_prompt(sample, variant.config, lib).text;
        if (variant.name == "Full") full_text = text;
        const auto path =
            std::filesystem::path(kFixturesDir) / "golden" / ("main_v1_" + variant.name + ".txt");
        require(std::filesystem::exists(path), "missing snapshot " + path.string());
        require(text == test::read_file(path), variant.name + " render deviates from its snapshot");
    }

    // one block per variant: the variant must be the full text minus whole
    // lines, all of which belong to the ablated block
    const auto full_lines = split_lines(full_text);
    for (const auto& variant : variants) {
        if (variant.name == "Full") continue;
        const auto text = render_prompt(sample, variant.config, lib).text;
        const auto v_lines = split_lines(text);
        std::vector<std::string> removed;
        std::size_t j = 0;
        for (const auto& line : full_lines) {
            if (j < v_lines.size() && line == v_lines[j])
                ++j;
            else
                removed.push_back(line);
        }
        require(j == v_lines.size(), variant.name + " added lines not present in Full");
        require(!removed.empty(), variant.name + " removed nothing");
        std::size_t expected = 0;
        if (variant.name == "NoHistory" || variant.name == "NoContext") expected = 2;
        if (variant.name == "NoTime") expected = 3;
        if (variant.name == "NoGuide") expected = 4;
        if (variant.name == "NoReason") expected = 1;
        require(removed.size() == expected,
                variant.name + " removed " + std::to_string(removed.size()) + " lines, expected " +
                    std::to_string(expected));
    }

    const auto data = extract_prompt_data(full_text);
    require(data.has_value(), "full prompt failed extraction");
    require(data->history == sample.history && data->context == sample.context,
            "history/context blocks did not round-trip");
    require(data->target && *data->target == sample.target, "target did not round-trip");
}

// ---------------------------------------------------------------------------
// 6. Parser corpus

void criterion_parser_corpus() {
    const auto corpus = std::filesystem::path(kFixturesDir) / "parser_corpus";
    std::vector<std::filesystem::path> cases;
    for (const auto& entry : std::filesystem::directory_iterator(corpus))
        if (entry.path().extension() == ".txt") cases.push_back(entry.path());
    std::sort(cases.begin(), cases.end());
    require(cases.size() >= 30, "corpus has fewer than 30 cases");

    bool saw_dup_fixture = false, saw_scalar = false;
    for (const auto& txt : cases) {
        auto expected_path = txt;
        expected_path.replace_extension(".expected");
        const auto expected = nlohmann::json::parse(test::read_file(expected_path));
        RawResponse raw;
        raw.text = test::read_file(txt);
        const auto res = parse_prediction(raw, expected.at("k").get<int>());
        const std::string name = txt.filename().string();
        if (expected.at("ok").get<bool>()) {
            require(res.ok(), name + ": expected success, got " + to_string(res.status));
            const auto places = expected.at("places").get<std::vector<int>>();
            require(res.prediction.places == places, name + ": places mismatch");
            require(res.prediction.diagnostics.had_duplicates ==
                        expected.at("had_duplicates").get<bool>(),
                    name + ": had_duplicates mismatch");
            require(res.prediction.diagnostics.was_truncated ==
                        expected.at("was_truncated").get<bool>(),
                    name + ": was_truncated mismatch");
            if (places == std::vector<int>{445, 9, 444, 335, 448, 447, 446, 1, 443})
                saw_dup_fixture = true;
            if (places == std::vector<int>{9} && expected.at("k").get<int>() == 1) saw_scalar = true;
        } else {
            require(!res.ok(), name + ": expected failure");
            require(to_string(res.status) == expected.at("error").get<std::string>(),
                    name + ": error kind mismatch");
        }
    }
    require(saw_dup_fixture, "corpus must include the duplicated top-10 list fixture");
    require(saw_scalar, "corpus must include the bare-scalar k=1 case");
}

// ---------------------------------------------------------------------------
// 7. End-to-end determinism with the mock backend

std::string normalized_results(const std::string& path) {
    std::ifstream in(path);
    std::string line, out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        if (j.contains("latency_ms")) j["latency_ms"] = 0.0;
        out += j.dump() + "\n";
    }
    return out;
}

void criterion_end_to_end() {
    const auto t0 = std::chrono::steady_clock::now();
    test::ScratchDir dir("acceptance_e2e");
    // 25 users x 200 stays at test fraction 0.2 -> exactly 1000 test samples
    const auto seqs = test::make_synthetic_sequences(
        {.seed = 31, .users = 25, .stays_per_user = 200, .places = 14});
    test::write_stays_csv(dir.path() / "stays.csv", seqs);

    ExperimentConfig cfg;
    cfg.data.stays_path = dir.str("stays.csv");
    cfg.template_dir = kTemplatesDir;
    cfg.output_dir = dir.str("out");
    cfg.predictor = Predictor::mock;

    const auto run1 = run_experiment(cfg, "e2e_a");
    require(run1.total_samples == 1000, "expected exactly 1000 samples, got " +
                                            std::to_string(run1.total_samples));
    const auto run2 = run_experiment(cfg, "e2e_b");
    const auto rep1 = serialize_report(evaluate(run1.results_path).report);
    const auto rep2 = serialize_report(evaluate(run2.results_path).report);
    require(rep1 == rep2, "two mock runs disagree on metrics");
    require(normalized_results(run1.results_path) == normalized_results(run2.results_path),
            "two mock runs are not byte-identical modulo timing");

    // kill-and-resume: keep meta plus a record prefix, then resume
    std::vector<std::string> lines;
    {
        std::ifstream in(run1.results_path);
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
    }
    const auto partial = (std::filesystem::path(cfg.output_dir) / "e2e_resume.jsonl").string();
    {
        std::ofstream out(partial, std::ios::binary);
        for (std::size_t i = 0; i < lines.size() / 3; ++i) out << lines[i] << "\n";
        out << lines[lines.size() / 3].substr(0, 20);  // torn tail
    }
    const auto resumed = run_experiment(cfg, "e2e_resume");
    require(resumed.resumed > 0, "resume did not pick up existing records");
    require(serialize_report(evaluate(resumed.results_path).report) == rep1,
            "resumed run report differs from the uninterrupted run");
    require(normalized_results(resumed.results_path) == normalized_results(run1.results_path),
            "resumed results file differs from the uninterrupted run");
    require(seconds_since(t0) < 60.0, "end-to-end determinism exceeded 60 s");
}

// ---------------------------------------------------------------------------
// 8. Gateway contract against a local stub

void criterion_gateway() {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::atomic<int> current{0}, high_water{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        const int hit = ++hits;
        const int now = ++current;
        int prev = high_water.load();
        while (prev < now && !high_water.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        --current;
        if (hit == 1) {
            res.status = 429;
        } else {
            res.set_content(
                nlohmann::json{
                    {"choices",
                     {{{"message", {{"role", "assistant"}, {"content", "{\"prediction\": [1]}"}}}}}}}
                    .dump(),
                "application/json");
        }
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    test::ScratchDir dir("acceptance_gw");
    BackendConfig cfg;
    cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    cfg.model_id = "stub";
    cfg.retry_initial_delay_ms = 10;
    cfg.max_retries = 3;
    cfg.max_in_flight = 2;
    cfg.cache_dir = dir.str("cache");
    cfg.timeout_s = 5;
    HttpGateway gw(cfg);

    const PromptText prompt{"next place?", "cafe0001"};
    const auto first = gw.complete(prompt);
    require(first.attempt_count == 2, "429-then-200 must succeed with attempt_count = 2, got " +
                                          std::to_string(first.attempt_count));
    const int hits_after_first = hits.load();
    const auto second = gw.complete(prompt);
    require(second.from_cache, "identical request must be served from cache");
    require(second.text == first.text, "cache returned different bytes");
    require(hits.load() == hits_after_first, "cache hit still contacted the server");

    high_water = 0;
    std::vector<std::thread> callers;
    for (int i = 0; i < 6; ++i)
        callers.emplace_back([&gw, i] {
            (void)gw.complete(PromptText{"p" + std::to_string(i), "h" + std::to_string(i)});
        });
    for (auto& t : callers) t.join();
    require(high_water.load() <= cfg.max_in_flight,
            "in-flight requests exceeded max_in_flight: " + std::to_string(high_water.load()));

    server.stop();
    listener.join();
}

// ---------------------------------------------------------------------------
// 9. Live smoke (optional)

void criterion_live_smoke() {
    const char* endpoint = std::getenv("LLMMOB_SMOKE_ENDPOINT");
    if (!endpoint) throw CriterionSkip("set LLMMOB_SMOKE_ENDPOINT (and the API key) to enable");
    const char* key_env_name = std::getenv("LLMMOB_SMOKE_KEY_ENV");
    const std::string key_env = key_env_name ? key_env_name : "OPENAI_API_KEY";
    if (!std::getenv(key_env.c_str())) throw CriterionSkip("no API key in $" + key_env);
    const char* model = std::getenv("LLMMOB_SMOKE_MODEL");

    test::ScratchDir dir("acceptance_smoke");
    ExperimentConfig cfg;
    cfg.data.stays_path = kDataDir + "/synthetic_stays.csv";
    cfg.template_dir = kTemplatesDir;
    cfg.output_dir = dir.str("out");
    cfg.predictor = Predictor::llm;
    cfg.backend.endpoint_url = endpoint;
    cfg.backend.model_id = model ? model : "gpt-3.5-turbo";
    cfg.backend.api_key_env = key_env;
    cfg.sample_limit = 20;

    const auto sum = run_experiment(cfg, "smoke");
    const auto eval = evaluate(sum.results_path);
    require(eval.report.n_samples == 20, "smoke run must cover 20 samples");
    require(eval.report.parse_failure_rate <= 0.10,
            "parse success below 90%: failure rate " +
                std::to_string(eval.report.parse_failure_rate));
    (void)serialize_report(eval.report);  // must render without throwing
}

// ---------------------------------------------------------------------------
// 10. Ingestion statistics on the bundled dataset

void criterion_ingest_stats() {
    const auto seqs =
        load_stays(kDataDir + "/synthetic_stays.csv", StayFileFormat::csv, 0);
    const auto st = compute_stats(seqs, 0.2, 10);
    require(st.users == 12, "users: expected 12, got " + std::to_string(st.users));
    require(st.dropped_users == 0, "no user should fall below the stay minimum");
    require(st.test_samples == 288, "test samples: expected 288, got " + std::to_string(st.test_samples));
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9; };
    require(close(st.stays_per_user_mean, 120.0), "stays/user mean drifted");
    require(close(st.stays_per_user_std, 0.0), "stays/user std drifted");
    require(close(st.places_per_user_mean, 14.416666666666666), "places/user mean drifted");
    require(close(st.places_per_user_std, 0.75920279826202497), "places/user std drifted");
    require(close(st.days_tracked_mean, 29.120849729938275), "days tracked mean drifted");
    require(close(st.days_tracked_std, 1.0190719965568842), "days tracked std drifted");
}

struct Criterion {
    int id;
    std::string name;
    std::function<void()> fn;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "metrics oracle equivalence (1000 randomized samples, 1e-12)", criterion_metrics_oracle},
        {2, "analytic metric anchors (rank-1, rank-3, weighted-F1 2/3)", criterion_metric_anchors},
        {3, "1-MMC recovery (5-state chain, 10000 transitions, L1 < 0.05)", criterion_mmc_recovery},
        {4, "window correctness and leakage scan", criterion_windows},
        {5, "prompt golden snapshots and single-block ablations", criterion_prompt_goldens},
        {6, "parser corpus (>= 30 fixtures incl. duplicate and scalar cases)", criterion_parser_corpus},
        {7, "end-to-end determinism and resume with the mock backend", criterion_end_to_end},
        {8, "gateway contract: cache, retry, bounded concurrency", criterion_gateway},
        {9, "live smoke against an OpenAI-compatible endpoint (optional)", criterion_live_smoke},
        {10, "ingestion statistics on the bundled dataset", criterion_ingest_stats},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        try {
            c.fn();
            std::cout << "[PASS] criterion " << c.id << ": " << c.name << "\n";
        } catch (const CriterionSkip& e) {
            std::cout << "[SKIP] criterion " << c.id << ": " << c.name << " - " << e.what() << "\n";
        } catch (const std::exception& e) {
            ++failed;
            std::cout << "[FAIL] criterion " << c.id << ": " << c.name << " - " << e.what() << "\n";
        }
    }
    if (failed) {
        std::cout << failed << " criteria failed\n";
        return 1;
    }
    std::cout << "all criteria passed (or were explicitly skipped)\n";
    return 0;
}
