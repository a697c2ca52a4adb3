#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "evcast/calendar.hpp"
#include "evcast/clustering.hpp"
#include "evcast/csv.hpp"
#include "evcast/errors.hpp"
#include "evcast/transactions.hpp"

namespace evcast {

/// One day of one cluster's aggregated charging activity.
struct DailyRow {
    Date date{};
    Weekday day = Weekday::Mon;
    Season season = Season::Winter;
    long owners = 0;    // cumulative distinct participants seen so far
    long users = 0;     // distinct participants charging this day
    long trans = 0;     // session count this day
    double demand = 0.0;    // upper bound: sum of battery capacity per session
    double consumed = 0.0;  // metered energy
};

struct DailyClusterSeries {
    int cluster = 0;
    std::vector<DailyRow> rows;
    static constexpr int period = 7;

    std::vector<double> column(const std::string& name) const {
        std::vector<double> v;
        v.reserve(rows.size());
        for (const auto& r : rows) {
            if (name == "owners") v.push_back(static_cast<double>(r.owners));
            else if (name == "users") v.push_back(static_cast<double>(r.users));
            else if (name == "trans") v.push_back(static_cast<double>(r.trans));
            else if (name == "demand") v.push_back(r.demand);
            else if (name == "consumed") v.push_back(r.consumed);
            else throw UsageError("series: unknown column '" + name + "'");
        }
        return v;
    }
};

/// Builds one day-wise series per cluster. Sessions bucket to the civil date
/// of plug_in; a cluster's series starts at its first active day. Demand per
/// day is the sum of battery capacities over that day's sessions, so each
/// session contributes capacity times one.
inline std::vector<DailyClusterSeries> build_daily_series(const std::vector<ChargingTransaction>& txns,
                                                          const std::map<std::string, int>& cluster_map) {
    struct DayAcc {
        std::set<std::string> users;
        long trans = 0;
        std::vector<double> demand_terms;
        std::vector<double> consumed_terms;
    };
    // cluster -> date -> accumulators; map keys give deterministic order.
    std::map<int, std::map<Date, DayAcc>> acc;
    std::map<int, std::map<Date, std::set<std::string>>> first_seen;

    for (const auto& t : txns) {
        auto it = cluster_map.find(t.participant_id);
        if (it == cluster_map.end())
            throw DataError("build_daily_series: participant '" + t.participant_id + "' has no cluster");
        const int c = it->second;
        const Date d = date_of(t.plug_in);
        DayAcc& a = acc[c][d];
        a.users.insert(t.participant_id);
        a.trans += 1;
        a.demand_terms.push_back(t.car_kwh);
        a.consumed_terms.push_back(t.consumed_kwh);
        first_seen[c][d].insert(t.participant_id);
    }

    std::vector<DailyClusterSeries> out;
    for (auto& [cluster, days] : acc) {
        DailyClusterSeries s;
        s.cluster = cluster;
        std::set<std::string> seen;
        for (auto& [date, a] : days) {
            for (const auto& id : first_seen[cluster][date]) seen.insert(id);
            DailyRow r;
            r.date = date;
            r.day = weekday_of(date);
            r.season = season_of(date);
            r.owners = static_cast<long>(seen.size());
            r.users = static_cast<long>(a.users.size());
            r.trans = a.trans;
            r.demand = stable_sum(std::move(a.demand_terms));
            r.consumed = stable_sum(std::move(a.consumed_terms));
            s.rows.push_back(r);
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_series_csv(std::ostream& os, const DailyClusterSeries& s) {
    csv::write_row(os, {"date", "day", "season", "owners", "users", "trans", "demand", "consumed"});
    for (const auto& r : s.rows) {
        csv::write_row(os, {format_date(r.date), kWeekdayNames[static_cast<int>(r.day)],
                            kSeasonNames[static_cast<int>(r.season)], std::to_string(r.owners),
                            std::to_string(r.users), std::to_string(r.trans), csv::fmt_double(r.demand),
                            csv::fmt_double(r.consumed)});
    }
}

inline DailyClusterSeries read_series_csv(std::istream& is, int cluster) {
    const csv::Table t = csv::read_table(is);
    const char* names[8] = {"date", "day", "season", "owners", "users", "trans", "demand", "consumed"};
    int idx[8];
    for (int i = 0; i < 8; ++i) {
        idx[i] = t.column(names[i]);
        if (idx[i] < 0) throw DataError(std::string("series: missing column '") + names[i] + "'");
    }
    DailyClusterSeries s;
    s.cluster = cluster;
    for (const auto& row : t.rows) {
        DailyRow r;
        const auto date = parse_date(row[static_cast<std::size_t>(idx[0])]);
        if (!date) throw DataError("series: bad date '" + row[static_cast<std::size_t>(idx[0])] + "'");
        r.date = *date;
        r.day = weekday_of(r.date);
        r.season = season_of(r.date);
        r.owners = static_cast<long>(csv::parse_double(row[static_cast<std::size_t>(idx[3])]));
        r.users = static_cast<long>(csv::parse_double(row[static_cast<std::size_t>(idx[4])]));
        r.trans = static_cast<long>(csv::parse_double(row[static_cast<std::size_t>(idx[5])]));
        r.demand = csv::parse_double(row[static_cast<std::size_t>(idx[6])]);
        r.consumed = csv::parse_double(row[static_cast<std::size_t>(idx[7])]);
        s.rows.push_back(r);
    }
    return s;
}

}  // namespace evcast
