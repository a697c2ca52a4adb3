#pragma once

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>

namespace evcast {

/// Civil dates and timestamps. All times are local civil time; nothing in the
/// pipeline needs timezone arithmetic, only day bucketing.
using Date = std::chrono::sys_days;
using Timestamp = std::chrono::sys_seconds;

enum class Weekday { Mon = 0, Tue, Wed, Thu, Fri, Sat, Sun };
enum class Season { Winter = 0, Spring, Summer, Autumn };

inline constexpr const char* kWeekdayNames[7] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
inline constexpr const char* kSeasonNames[4] = {"Winter", "Spring", "Summer", "Autumn"};

inline Weekday weekday_of(Date d) {
    const std::chrono::weekday wd{d};
    return static_cast<Weekday>((wd.c_encoding() + 6) % 7);  // C encoding: Sun=0
}

/// Meteorological UK mapping: Dec-Feb Winter, Mar-May Spring, Jun-Aug Summer,
/// Sep-Nov Autumn.
inline Season season_of(Date d) {
    const std::chrono::year_month_day ymd{d};
    const unsigned m = static_cast<unsigned>(ymd.month());
    if (m == 12 || m <= 2) return Season::Winter;
    if (m <= 5) return Season::Spring;
    if (m <= 8) return Season::Summer;
    return Season::Autumn;
}

inline std::optional<Date> parse_date(const std::string& s) {
    int y = 0, mo = 0, da = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &mo, &da) != 3) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(da)}};
    if (!ymd.ok()) return std::nullopt;
    return Date{ymd};
}

/// ISO-8601 "YYYY-MM-DD HH:MM[:SS]" (or with a 'T' separator).
inline std::optional<Timestamp> parse_timestamp(const std::string& s) {
    int y = 0, mo = 0, da = 0, h = 0, mi = 0, se = 0;
    char sep = ' ';
    int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &da, &sep, &h, &mi, &se);
    if (n < 6 || (sep != ' ' && sep != 'T')) {
        // Date-only inputs are not valid timestamps here.
        return std::nullopt;
    }
    if (n == 6) se = 0;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(da)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 || se > 60) return std::nullopt;
    return Timestamp{Date{ymd}} + std::chrono::hours{h} + std::chrono::minutes{mi} + std::chrono::seconds{se};
}

inline Date date_of(Timestamp t) { return std::chrono::floor<std::chrono::days>(t); }

inline std::string format_date(Date d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

inline std::string format_timestamp(Timestamp t) {
    const Date d = date_of(t);
    auto rest = std::chrono::duration_cast<std::chrono::seconds>(t - Timestamp{d}).count();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s %02lld:%02lld:%02lld", format_date(d).c_str(),
                  static_cast<long long>(rest / 3600), static_cast<long long>(rest / 60 % 60),
                  static_cast<long long>(rest % 60));
    return buf;
}

}  // namespace evcast
