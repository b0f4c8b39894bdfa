#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace llmmob {

struct EmptySampleSetError : std::invalid_argument {
    EmptySampleSetError() : std::invalid_argument("metrics over an empty sample set") {}
};

// One scored test instance. places is empty when the sample parse-failed;
// such samples stay in every denominator.
struct ScoredSample {
    std::string sample_id;
    std::vector<int> places;  // ranked prediction, may be empty
    int ground_truth = 0;
    std::optional<int> hit_rank;  // 1-based position of ground_truth in places
};

inline std::optional<int> find_hit_rank(const std::vector<int>& places, int ground_truth) {
    for (std::size_t i = 0; i < places.size(); ++i) {
        if (places[i] == ground_truth) return static_cast<int>(i) + 1;
    }
    return std::nullopt;
}

inline ScoredSample make_scored(std::string sample_id, std::vector<int> places, int ground_truth) {
    ScoredSample s;
    s.sample_id = std::move(sample_id);
    s.hit_rank = find_hit_rank(places, ground_truth);
    s.places = std::move(places);
    s.ground_truth = ground_truth;
    return s;
}

inline double acc_at_k(const std::vector<ScoredSample>& samples, int k) {
    if (samples.empty()) throw EmptySampleSetError{};
    if (k < 1) throw std::invalid_argument("acc_at_k: k must be >= 1");
    std::size_t hits = 0;
    for (const auto& s : samples) {
        if (s.hit_rank && *s.hit_rank <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// Single-relevance nDCG: a hit at rank r within the top k contributes
// 1/log2(r+1), IDCG is 1. Mean over all samples, misses contributing 0.
inline double ndcg_at_k(const std::vector<ScoredSample>& samples, int k) {
    if (samples.empty()) throw EmptySampleSetError{};
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    double total = 0.0;
    for (const auto& s : samples) {
        if (s.hit_rank && *s.hit_rank <= k)
            total += 1.0 / std::log2(static_cast<double>(*s.hit_rank) + 1.0);
    }
    return total / static_cast<double>(samples.size());
}

// F1 per ground-truth class from rank-1 predictions, weighted by class
// support in the evaluated set. A parse-failed sample predicts a reserved
// "none" label, i.e. a miss for its true class.
inline double weighted_f1(const std::vector<ScoredSample>& samples) {
    if (samples.empty()) throw EmptySampleSetError{};
    constexpr int kNoneLabel = -1;  // place ids are non-negative

    std::map<int, std::size_t> support, tp, fp, fn;
    for (const auto& s : samples) {
        const int truth = s.ground_truth;
        const int pred = s.places.empty() ? kNoneLabel : s.places.front();
        ++support[truth];
        if (pred == truth) {
            ++tp[truth];
        } else {
            ++fn[truth];
            ++fp[pred];
        }
    }
    double weighted = 0.0;
    const auto total = static_cast<double>(samples.size());
    for (const auto& [cls, sup] : support) {
        const double tpc = static_cast<double>(tp.count(cls) ? tp[cls] : 0);
        const double fpc = static_cast<double>(fp.count(cls) ? fp[cls] : 0);
        const double fnc = static_cast<double>(fn.count(cls) ? fn[cls] : 0);
        const double p = (tpc + fpc) > 0 ? tpc / (tpc + fpc) : 0.0;
        const double r = (tpc + fnc) > 0 ? tpc / (tpc + fnc) : 0.0;
        const double f1 = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
        weighted += (static_cast<double>(sup) / total) * f1;
    }
    return weighted;
}

// Flat record per the report schema; acc5/acc10/ndcg10 are absent for k=1
// runs, where only the top place was ever requested.
struct MetricsReport {
    double acc1 = 0.0;
    std::optional<double> acc5;
    std::optional<double> acc10;
    double weighted_f1 = 0.0;
    std::optional<double> ndcg10;
    double parse_failure_rate = 0.0;
    std::size_t n_samples = 0;
};

inline MetricsReport compute_report(const std::vector<ScoredSample>& samples,
                                    std::size_t parse_failures, int k) {
    MetricsReport r;
    r.n_samples = samples.size();
    r.acc1 = acc_at_k(samples, 1);
    r.weighted_f1 = weighted_f1(samples);
    r.parse_failure_rate = samples.empty() ? 0.0
                                           : static_cast<double>(parse_failures) /
                                                 static_cast<double>(samples.size());
    if (k > 1) {
        r.acc5 = acc_at_k(samples, 5);
        r.acc10 = acc_at_k(samples, 10);
        r.ndcg10 = ndcg_at_k(samples, 10);
    }
    return r;
}

namespace detail {
inline std::string fmt_metric(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}
}  // namespace detail

// "acc1=0.4510 acc5=... n_samples=3459" single-line form for logs.
inline std::string serialize_report(const MetricsReport& r) {
    std::string out;
    out += "acc1=" + detail::fmt_metric(r.acc1);
    out += " acc5=" + detail::fmt_metric(r.acc5);
    out += " acc10=" + detail::fmt_metric(r.acc10);
    out += " weighted_f1=" + detail::fmt_metric(r.weighted_f1);
    out += " ndcg10=" + detail::fmt_metric(r.ndcg10);
    out += " parse_failure_rate=" + detail::fmt_metric(r.parse_failure_rate);
    out += " n_samples=" + std::to_string(r.n_samples);
    return out;
}

}  // namespace llmmob
