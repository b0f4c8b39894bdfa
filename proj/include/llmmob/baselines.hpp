#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmmob/stays.hpp"

namespace llmmob {

// First-order mobility Markov chain for one user. Successor lists are kept
// pre-sorted: probability desc, then global visit count desc, then place id
// asc. The same frequency/id rule orders the fallback ranking.
struct TransitionModel {
    struct Candidate {
        int place_id = 0;
        double probability = 0.0;
    };
    std::map<int, std::vector<Candidate>> successors;  // origin place -> ranked candidates
    std::map<int, std::size_t> visit_counts;           // global per-place frequency

    bool empty() const { return visit_counts.empty(); }
};

inline TransitionModel fit_1mmc(const std::vector<Stay>& train_stays) {
    TransitionModel m;
    for (const auto& s : train_stays) ++m.visit_counts[s.place_id];
    std::map<int, std::map<int, std::size_t>> counts;
    for (std::size_t i = 0; i + 1 < train_stays.size(); ++i)
        ++counts[train_stays[i].place_id][train_stays[i + 1].place_id];
    for (const auto& [origin, succ] : counts) {
        std::size_t total = 0;
        for (const auto& [_, c] : succ) total += c;
        std::vector<TransitionModel::Candidate> list;
        list.reserve(succ.size());
        for (const auto& [place, c] : succ)
            list.push_back({place, static_cast<double>(c) / static_cast<double>(total)});
        std::sort(list.begin(), list.end(),
                  [&m](const TransitionModel::Candidate& a, const TransitionModel::Candidate& b) {
                      if (a.probability != b.probability) return a.probability > b.probability;
                      const auto fa = m.visit_counts.at(a.place_id);
                      const auto fb = m.visit_counts.at(b.place_id);
                      if (fa != fb) return fa > fb;
                      return a.place_id < b.place_id;
                  });
        m.successors[origin] = std::move(list);
    }
    return m;
}

// Up to k successors of current_place; padded with the remaining places by
// global frequency (ties by ascending id), never duplicating. An unknown
// current place falls through entirely to the frequency ranking.
inline std::vector<int> predict_1mmc(const TransitionModel& m, int current_place, int k) {
    std::vector<int> out;
    if (k < 1) return out;
    auto it = m.successors.find(current_place);
    if (it != m.successors.end()) {
        for (const auto& c : it->second) {
            if (static_cast<int>(out.size()) >= k) break;
            out.push_back(c.place_id);
        }
    }
    if (static_cast<int>(out.size()) < k) {
        std::vector<std::pair<int, std::size_t>> rest(m.visit_counts.begin(), m.visit_counts.end());
        std::sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (const auto& [place, _] : rest) {
            if (static_cast<int>(out.size()) >= k) break;
            if (std::find(out.begin(), out.end(), place) == out.end()) out.push_back(place);
        }
    }
    return out;
}

inline std::vector<int> predict_topfreq(const TransitionModel& m, int k) {
    std::vector<std::pair<int, std::size_t>> places(m.visit_counts.begin(), m.visit_counts.end());
    std::sort(places.begin(), places.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<int> out;
    for (const auto& [place, _] : places) {
        if (static_cast<int>(out.size()) >= k) break;
        out.push_back(place);
    }
    return out;
}

// One user per line: {"user_id":..., "transitions":{origin:[[place,prob],..]},
// "counts":{place:n}} for offline inspection and reload.
inline void dump_models_jsonl(const std::string& path,
                              const std::map<std::string, TransitionModel>& models) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    for (const auto& [user, m] : models) {
        nlohmann::json trans = nlohmann::json::object();
        for (const auto& [origin, list] : m.successors) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& c : list) arr.push_back({c.place_id, c.probability});
            trans[std::to_string(origin)] = std::move(arr);
        }
        nlohmann::json counts = nlohmann::json::object();
        for (const auto& [place, n] : m.visit_counts) counts[std::to_string(place)] = n;
        out << nlohmann::json{{"user_id", user}, {"transitions", trans}, {"counts", counts}}.dump()
            << "\n";
    }
}

inline std::map<std::string, TransitionModel> load_models_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::map<std::string, TransitionModel> models;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        TransitionModel m;
        for (const auto& [place, n] : j.at("counts").items())
            m.visit_counts[std::stoi(place)] = n.get<std::size_t>();
        for (const auto& [origin, arr] : j.at("transitions").items()) {
            std::vector<TransitionModel::Candidate> list;
            for (const auto& e : arr) list.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
            m.successors[std::stoi(origin)] = std::move(list);
        }
        models[j.at("user_id").get<std::string>()] = std::move(m);
    }
    return models;
}

}  // namespace llmmob
