#pragma once

#include <algorithm>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmmob/backend_types.hpp"
#include "llmmob/prompt.hpp"

namespace llmmob {

struct ExtractionFailedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
inline int circular_minutes_apart(int a, int b) {
    const int d = std::abs(a - b);
    return std::min(d, 1440 - d);
}
}  // namespace detail

// Deterministic offline backend. Re-reads the stays out of the rendered
// prompt, scores each place by visit count, doubling the weight of stays on
// the target's weekday within 120 minutes of the target time, and answers in
// the required output schema. It exists to exercise the pipeline without a
// network, not to imitate model quality.
inline RawResponse mock_complete(const PromptText& prompt, int k) {
    const auto data = extract_prompt_data(prompt.text);
    if (!data)
        throw ExtractionFailedError("prompt text did not round-trip through the reference extractor");

    std::map<int, double> score;
    auto tally = [&](const std::vector<Stay>& stays) {
        for (const auto& s : stays) {
            double w = 1.0;
            if (data->target && s.day_of_week == data->target->day_of_week &&
                detail::circular_minutes_apart(s.start_minutes, data->target->start_minutes) <= 120)
                w = 2.0;
            score[s.place_id] += w;
        }
    };
    tally(data->history);
    tally(data->context);

    std::vector<std::pair<int, double>> ranked(score.begin(), score.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    std::vector<int> places;
    for (const auto& [place, _] : ranked) {
        if (static_cast<int>(places.size()) >= k) break;
        places.push_back(place);
    }

    nlohmann::json out;
    if (k == 1 && !places.empty()) {
        out["prediction"] = places.front();
    } else {
        out["prediction"] = places;
    }
    std::string reason = "Places ranked by visit frequency over the provided stays";
    if (data->target) reason += ", weighting stays near the target day and time twice";
    reason += ".";
    out["reason"] = reason;

    RawResponse r;
    r.text = out.dump();
    r.model_id = "mock";
    r.attempt_count = 1;
    return r;
}

}  // namespace llmmob
