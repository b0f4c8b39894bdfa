#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace llmmob {

enum class Weekday { Monday = 0, Tuesday, Wednesday, Thursday, Friday, Saturday, Sunday };

inline const char* weekday_name(Weekday d) {
    static const char* names[] = {"Monday", "Tuesday",  "Wednesday", "Thursday",
                                  "Friday", "Saturday", "Sunday"};
    return names[static_cast<int>(d)];
}

inline std::optional<Weekday> weekday_from_name(std::string_view s) {
    for (int i = 0; i < 7; ++i) {
        if (s == weekday_name(static_cast<Weekday>(i))) return static_cast<Weekday>(i);
    }
    return std::nullopt;
}

// "17:30" from minutes-since-midnight.
inline std::string format_hhmm(int minutes_of_day) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d:%02d", minutes_of_day / 60, minutes_of_day % 60);
    return buf;
}

inline std::optional<int> parse_hhmm(std::string_view s) {
    int h = 0, m = 0;
    if (std::sscanf(std::string(s).c_str(), "%d:%d", &h, &m) != 2) return std::nullopt;
    if (h < 0 || h > 23 || m < 0 || m > 59) return std::nullopt;
    return h * 60 + m;
}

struct LocalTime {
    int minutes_of_day = 0;  // 0..1439
    Weekday day_of_week = Weekday::Monday;
};

// Wall-clock fields for an epoch instant shifted by a fixed UTC offset.
inline LocalTime local_time_at(std::int64_t epoch_seconds, int utc_offset_minutes) {
    using namespace std::chrono;
    const std::int64_t shifted = epoch_seconds + std::int64_t{60} * utc_offset_minutes;
    std::int64_t days = shifted / 86400;
    std::int64_t rem = shifted % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    const weekday wd{sys_days{} + std::chrono::days{days}};
    // iso_encoding: Monday=1..Sunday=7
    LocalTime lt;
    lt.minutes_of_day = static_cast<int>(rem / 60);
    lt.day_of_week = static_cast<Weekday>(wd.iso_encoding() - 1);
    return lt;
}

// "YYYY-MM-DDTHH:MM:SS" wall-clock form of an epoch instant under a fixed
// UTC offset. Zone-less by design; the offset is dataset configuration.
inline std::string format_iso8601_local(std::int64_t epoch_seconds, int utc_offset_minutes) {
    using namespace std::chrono;
    const std::int64_t wall = epoch_seconds + std::int64_t{60} * utc_offset_minutes;
    const std::int64_t days = wall >= 0 ? wall / 86400 : (wall - 86399) / 86400;
    const std::int64_t rem = wall - days * 86400;
    const year_month_day ymd{sys_days{} + std::chrono::days{days}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()), int(rem / 3600), int((rem % 3600) / 60),
                  int(rem % 60));
    return buf;
}

// ISO-8601 without zone ("2008-05-06T17:30", optional ":SS") is read as
// dataset-local wall time; a trailing 'Z' marks UTC. Returns epoch seconds.
inline std::optional<std::int64_t> parse_iso8601(std::string_view text, int utc_offset_minutes) {
    std::string s(text);
    bool utc = false;
    if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) {
        utc = true;
        s.pop_back();
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    int n = std::sscanf(s.c_str(), "%d-%d-%d%*1[T ]%d:%d:%d", &y, &mo, &d, &h, &mi, &se);
    if (n < 5) return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31) return std::nullopt;
    if (h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 || se > 60) return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
    std::int64_t epoch = days * std::int64_t{86400} + h * 3600 + mi * 60 + se;
    if (!utc) epoch -= std::int64_t{60} * utc_offset_minutes;
    return epoch;
}

}  // namespace llmmob
