#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "llmmob/time_util.hpp"

namespace llmmob {

// One stationary episode. start_minutes is minutes since local midnight.
struct Stay {
    int start_minutes = 0;  // 0..1439
    Weekday day_of_week = Weekday::Monday;
    int duration_minutes = 0;  // whole minutes, >= 0
    int place_id = 0;          // dataset-global, non-negative

    bool operator==(const Stay&) const = default;
};

inline void validate(const Stay& s) {
    if (s.start_minutes < 0 || s.start_minutes > 1439)
        throw std::invalid_argument("Stay.start_minutes out of range: " + std::to_string(s.start_minutes));
    if (s.duration_minutes < 0) throw std::invalid_argument("Stay.duration_minutes negative");
    if (s.place_id < 0) throw std::invalid_argument("Stay.place_id negative");
}

// A user's stays ordered by absolute time. absolute_seconds is used only for
// ordering and splitting; the prompt-facing fields live in Stay.
struct UserSequence {
    std::string user_id;
    std::vector<Stay> stays;
    std::vector<std::int64_t> absolute_seconds;  // same length as stays, non-decreasing
};

struct TargetSlot {
    int start_minutes = 0;
    Weekday day_of_week = Weekday::Monday;

    bool operator==(const TargetSlot&) const = default;
};

// M historical + N context stays; total lookback is M + N.
struct WindowConfig {
    int history_len = 40;  // M
    int context_len = 5;   // N
};

inline void validate(const WindowConfig& cfg) {
    if (cfg.history_len < 1 || cfg.context_len < 1)
        throw std::invalid_argument("WindowConfig lengths must be >= 1");
}

struct PredictionSample {
    std::string sample_id;  // "<user_id>#<zero-padded target index>"
    std::string user_id;
    std::vector<Stay> history;  // size <= M, may be empty
    std::vector<Stay> context;  // size 1..N
    TargetSlot target;
    int ground_truth = 0;  // place_id of the target stay
};

inline std::string make_sample_id(const std::string& user_id, std::size_t target_index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05zu", target_index);
    return user_id + "#" + buf;
}

struct BuildSamplesResult {
    std::vector<PredictionSample> samples;  // ordered by target index
    int skipped_empty_context = 0;          // test indices with no prior stay
};

// Windows for target t: context = stays[max(0, t-N) .. t), history =
// stays[max(0, t-N-M) .. t-N). Both truncate at the start of the sequence.
// t = 0 has no possible context; the sample is skipped and counted.
inline BuildSamplesResult build_samples(const UserSequence& seq, const WindowConfig& cfg,
                                        const std::set<std::size_t>& test_indices) {
    validate(cfg);
    const auto n = seq.stays.size();
    const std::size_t M = static_cast<std::size_t>(cfg.history_len);
    const std::size_t N = static_cast<std::size_t>(cfg.context_len);

    BuildSamplesResult out;
    for (std::size_t t : test_indices) {
        if (t >= n) throw std::out_of_range("test index beyond sequence: " + std::to_string(t));
        if (t == 0) {
            ++out.skipped_empty_context;
            continue;
        }
        const std::size_t ctx_begin = t > N ? t - N : 0;
        const std::size_t hist_begin = ctx_begin > M ? ctx_begin - M : 0;

        PredictionSample s;
        s.sample_id = make_sample_id(seq.user_id, t);
        s.user_id = seq.user_id;
        s.history.assign(seq.stays.begin() + static_cast<std::ptrdiff_t>(hist_begin),
                         seq.stays.begin() + static_cast<std::ptrdiff_t>(ctx_begin));
        s.context.assign(seq.stays.begin() + static_cast<std::ptrdiff_t>(ctx_begin),
                         seq.stays.begin() + static_cast<std::ptrdiff_t>(t));
        const Stay& tgt = seq.stays[t];
        s.target = TargetSlot{tgt.start_minutes, tgt.day_of_week};
        s.ground_truth = tgt.place_id;
        out.samples.push_back(std::move(s));
    }
    return out;
}

}  // namespace llmmob
