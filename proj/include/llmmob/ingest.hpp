#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmmob/geo.hpp"
#include "llmmob/stays.hpp"
#include "llmmob/time_util.hpp"

namespace llmmob {

struct TrackPoint {
    std::string user_id;
    double lat = 0.0;
    double lon = 0.0;
    std::int64_t ts = 0;  // epoch seconds
};

struct IngestConfig {
    double stay_radius_m = 200.0;
    int stay_min_duration_min = 30;
    double place_cluster_radius_m = 200.0;
    double test_fraction = 0.2;  // strictly in (0,1)
    int min_stays_per_user = 10;
    int utc_offset_minutes = 0;  // wall clock = UTC + offset (Geolife: +480)
};

inline void validate(const IngestConfig& cfg) {
    if (cfg.stay_radius_m <= 0 || cfg.place_cluster_radius_m <= 0)
        throw std::invalid_argument("ingest radii must be positive");
    if (cfg.stay_min_duration_min <= 0) throw std::invalid_argument("stay_min_duration_min must be positive");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
        throw std::invalid_argument("test_fraction must be in (0,1)");
    if (cfg.min_stays_per_user <= 0) throw std::invalid_argument("min_stays_per_user must be positive");
}

struct LoadDiagnostics {
    int skipped_rows = 0;
    std::vector<std::string> row_errors;  // "line N: why", one per skipped row
};

namespace detail {

inline std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline std::optional<long long> parse_int(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) return std::nullopt;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) return std::nullopt;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

struct RawStayRow {
    std::string user_id;
    std::int64_t epoch = 0;
    int duration_min = 0;
    int place_id = 0;
};

// Shared by the CSV and JSONL loaders once a row has been pulled apart.
inline std::optional<std::string> check_row(const RawStayRow& r) {
    if (r.user_id.empty()) return "empty user_id";
    if (r.duration_min < 0) return "negative duration";
    if (r.place_id < 0) return "negative place_id";
    return std::nullopt;
}

inline std::vector<UserSequence> rows_to_sequences(std::vector<RawStayRow> rows, int utc_offset_minutes) {
    std::map<std::string, std::vector<RawStayRow>> by_user;
    for (auto& r : rows) by_user[r.user_id].push_back(std::move(r));
    std::vector<UserSequence> out;
    out.reserve(by_user.size());
    for (auto& [uid, urows] : by_user) {
        std::stable_sort(urows.begin(), urows.end(),
                         [](const RawStayRow& a, const RawStayRow& b) { return a.epoch < b.epoch; });
        UserSequence seq;
        seq.user_id = uid;
        seq.stays.reserve(urows.size());
        seq.absolute_seconds.reserve(urows.size());
        for (const auto& r : urows) {
            const LocalTime lt = local_time_at(r.epoch, utc_offset_minutes);
            seq.stays.push_back(Stay{lt.minutes_of_day, lt.day_of_week, r.duration_min, r.place_id});
            seq.absolute_seconds.push_back(r.epoch);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace detail

enum class StayFileFormat { csv, jsonl };

// Stay CSV header: user_id,start_ts,duration_min,place_id (ISO-8601 start_ts).
// JSONL: one object per line with the same keys. Malformed rows are skipped
// and counted; an input yielding zero stays is an error.
inline std::vector<UserSequence> load_stays(const std::string& path, StayFileFormat format,
                                            int utc_offset_minutes, LoadDiagnostics* diag = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stay file: " + path);

    LoadDiagnostics local;
    LoadDiagnostics& d = diag ? *diag : local;
    std::vector<detail::RawStayRow> rows;
    std::string line;
    int lineno = 0;
    auto skip = [&](const std::string& why) {
        ++d.skipped_rows;
        d.row_errors.push_back("line " + std::to_string(lineno) + ": " + why);
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        detail::RawStayRow r;
        if (format == StayFileFormat::csv) {
            if (lineno == 1 && line.rfind("user_id", 0) == 0) continue;  // header
            auto f = detail::split_csv_line(line);
            if (f.size() != 4) {
                skip("expected 4 fields, got " + std::to_string(f.size()));
                continue;
            }
            auto epoch = parse_iso8601(f[1], utc_offset_minutes);
            auto dur = detail::parse_int(f[2]);
            auto pid = detail::parse_int(f[3]);
            if (!epoch || !dur || !pid) {
                skip("unparseable timestamp/duration/place_id");
                continue;
            }
            r = {f[0], *epoch, static_cast<int>(*dur), static_cast<int>(*pid)};
        } else {
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                skip("invalid JSON object");
                continue;
            }
            if (!j.contains("user_id") || !j.contains("start_ts") || !j.contains("duration_min") ||
                !j.contains("place_id") || !j["start_ts"].is_string() ||
                !j["duration_min"].is_number_integer() || !j["place_id"].is_number_integer()) {
                skip("missing or mistyped keys");
                continue;
            }
            auto epoch = parse_iso8601(j["start_ts"].get<std::string>(), utc_offset_minutes);
            if (!epoch) {
                skip("unparseable timestamp");
                continue;
            }
            r = {j["user_id"].is_string() ? j["user_id"].get<std::string>()
                                          : j["user_id"].dump(),
                 *epoch, j["duration_min"].get<int>(), j["place_id"].get<int>()};
        }
        if (auto why = detail::check_row(r)) {
            skip(*why);
            continue;
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::runtime_error("empty dataset: " + path);
    return detail::rows_to_sequences(std::move(rows), utc_offset_minutes);
}

// Track-point CSV header: user_id,lat,lon,ts (epoch seconds). Points are
// sorted by timestamp per user after loading.
inline std::vector<TrackPoint> load_track_points(const std::string& path, LoadDiagnostics* diag = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open track-point file: " + path);
    LoadDiagnostics local;
    LoadDiagnostics& d = diag ? *diag : local;
    std::vector<TrackPoint> points;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        if (lineno == 1 && line.rfind("user_id", 0) == 0) continue;
        auto f = detail::split_csv_line(line);
        auto bad = [&](const std::string& why) {
            ++d.skipped_rows;
            d.row_errors.push_back("line " + std::to_string(lineno) + ": " + why);
        };
        if (f.size() != 4) {
            bad("expected 4 fields");
            continue;
        }
        auto lat = detail::parse_double(f[1]);
        auto lon = detail::parse_double(f[2]);
        auto ts = detail::parse_int(f[3]);
        if (f[0].empty() || !lat || !lon || !ts || *lat < -90 || *lat > 90 || *lon < -180 || *lon > 180) {
            bad("invalid coordinates or timestamp");
            continue;
        }
        points.push_back(TrackPoint{f[0], *lat, *lon, *ts});
    }
    if (points.empty()) throw std::runtime_error("empty dataset: " + path);
    std::stable_sort(points.begin(), points.end(), [](const TrackPoint& a, const TrackPoint& b) {
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        return a.ts < b.ts;
    });
    return points;
}

struct StayCandidate {
    double lat = 0.0;  // run centroid
    double lon = 0.0;
    std::int64_t start_ts = 0;
    int duration_min = 0;
};

// Anchor-based stay-point detection over one user's time-sorted points.
// A maximal run of consecutive points within stay_radius_m of the run's first
// point becomes a stay when it spans at least stay_min_duration_min. On a
// non-qualifying run the scan advances one point; qualifying runs are consumed
// whole.
inline std::vector<StayCandidate> detect_stays(const std::vector<TrackPoint>& points,
                                               const IngestConfig& cfg) {
    std::vector<StayCandidate> stays;
    const std::size_t n = points.size();
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n &&
               haversine_m(points[j + 1].lat, points[j + 1].lon, points[i].lat, points[i].lon) <=
                   cfg.stay_radius_m) {
            ++j;
        }
        const std::int64_t span_s = points[j].ts - points[i].ts;
        if (span_s >= std::int64_t{60} * cfg.stay_min_duration_min) {
            StayCandidate c;
            for (std::size_t p = i; p <= j; ++p) {
                c.lat += points[p].lat;
                c.lon += points[p].lon;
            }
            c.lat /= static_cast<double>(j - i + 1);
            c.lon /= static_cast<double>(j - i + 1);
            c.start_ts = points[i].ts;
            c.duration_min = static_cast<int>(span_s / 60);
            stays.push_back(c);
            i = j + 1;
        } else {
            ++i;
        }
    }
    return stays;
}

// Greedy leader clustering. A centroid joins the first place whose founding
// point lies within radius_m, otherwise founds a new place. Ids are assigned
// in first-seen order from 0 and are meant to be dataset-global, so feed every
// user's centroids through one registry in a deterministic order.
class PlaceRegistry {
public:
    explicit PlaceRegistry(double radius_m) : radius_m_(radius_m) {}

    int assign(double lat, double lon) {
        for (std::size_t i = 0; i < reps_.size(); ++i) {
            if (haversine_m(lat, lon, reps_[i].first, reps_[i].second) <= radius_m_)
                return static_cast<int>(i);
        }
        reps_.emplace_back(lat, lon);
        return static_cast<int>(reps_.size() - 1);
    }

    std::size_t place_count() const { return reps_.size(); }
    std::pair<double, double> representative(int id) const { return reps_.at(static_cast<std::size_t>(id)); }

private:
    double radius_m_;
    std::vector<std::pair<double, double>> reps_;
};

inline std::vector<int> assign_place_ids(const std::vector<std::pair<double, double>>& centroids,
                                         double radius_m) {
    PlaceRegistry reg(radius_m);
    std::vector<int> ids;
    ids.reserve(centroids.size());
    for (const auto& [lat, lon] : centroids) ids.push_back(reg.assign(lat, lon));
    return ids;
}

struct SplitResult {
    std::size_t first_test_index = 0;
    std::vector<std::size_t> test_targets;  // ascending positions
};

// The last ceil(test_fraction * n) positions become test targets. Users with
// fewer than min_stays_per_user stays are dropped (nullopt).
inline std::optional<SplitResult> split_train_test(const UserSequence& seq, double test_fraction,
                                                   int min_stays_per_user) {
    const std::size_t n = seq.stays.size();
    if (n < static_cast<std::size_t>(min_stays_per_user)) return std::nullopt;
    const auto test_count =
        static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n)));
    SplitResult r;
    r.first_test_index = n - test_count;
    for (std::size_t t = r.first_test_index; t < n; ++t) r.test_targets.push_back(t);
    return r;
}

inline void write_stays_jsonl(const std::string& path, const std::vector<UserSequence>& seqs,
                              int utc_offset_minutes) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    for (const auto& seq : seqs) {
        for (std::size_t i = 0; i < seq.stays.size(); ++i) {
            nlohmann::json j{{"user_id", seq.user_id},
                             {"start_ts", format_iso8601_local(seq.absolute_seconds[i], utc_offset_minutes)},
                             {"duration_min", seq.stays[i].duration_minutes},
                             {"place_id", seq.stays[i].place_id}};
            out << j.dump() << "\n";
        }
    }
}

// Table-style dataset summary: mean and (population) std across users.
struct DatasetStats {
    std::size_t users = 0;
    double stays_per_user_mean = 0, stays_per_user_std = 0;
    double places_per_user_mean = 0, places_per_user_std = 0;
    double days_tracked_mean = 0, days_tracked_std = 0;
    std::size_t test_samples = 0;
    std::size_t dropped_users = 0;  // below min_stays_per_user
};

inline DatasetStats compute_stats(const std::vector<UserSequence>& seqs, double test_fraction,
                                  int min_stays_per_user) {
    DatasetStats st;
    std::vector<double> stays_n, places_n, days_n;
    for (const auto& seq : seqs) {
        auto split = split_train_test(seq, test_fraction, min_stays_per_user);
        if (!split) {
            ++st.dropped_users;
            continue;
        }
        ++st.users;
        stays_n.push_back(static_cast<double>(seq.stays.size()));
        std::set<int> places;
        for (const auto& s : seq.stays) places.insert(s.place_id);
        places_n.push_back(static_cast<double>(places.size()));
        days_n.push_back(static_cast<double>(seq.absolute_seconds.back() - seq.absolute_seconds.front()) /
                         86400.0);
        st.test_samples += split->test_targets.size();
    }
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        if (v.empty()) return;
        mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double acc = 0;
        for (double x : v) acc += (x - mean) * (x - mean);
        sd = std::sqrt(acc / static_cast<double>(v.size()));
    };
    mean_std(stays_n, st.stays_per_user_mean, st.stays_per_user_std);
    mean_std(places_n, st.places_per_user_mean, st.places_per_user_std);
    mean_std(days_n, st.days_tracked_mean, st.days_tracked_std);
    return st;
}

inline std::string render_stats(const DatasetStats& st) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "# Users                    %zu\n"
                  "# Days tracked             %.1f +- %.1f\n"
                  "# Stays per user           %.1f +- %.1f\n"
                  "# Unique places per user   %.1f +- %.1f\n"
                  "# Test samples             %zu\n"
                  "# Dropped users            %zu\n",
                  st.users, st.days_tracked_mean, st.days_tracked_std, st.stays_per_user_mean,
                  st.stays_per_user_std, st.places_per_user_mean, st.places_per_user_std,
                  st.test_samples, st.dropped_users);
    return buf;
}

}  // namespace llmmob
