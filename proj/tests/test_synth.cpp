#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "evcast/series.hpp"
#include "evcast/synth.hpp"

using namespace evcast;

namespace {

SynthConfig one_cluster_config(int owners, int horizon) {
    SynthConfig c;
    c.horizon_days = horizon;
    c.clusters[1] = {owners, {4.4, 6.1, 8.8, 12.0, 16.0, 18.7}, 5.68, 0.68, 3.5, EvType::PHEV};
    c.seed = 3;
    return c;
}

long seconds_past_midnight(Timestamp t) {
    return static_cast<long>((t - Timestamp{date_of(t)}).count());
}

long active_days(const SynthConfig& c, int cluster) {
    const auto& s = c.clusters.at(cluster);
    long total = 0;
    for (int i = 0; i < s.owners_final; ++i)
        total += c.horizon_days - detail::arrival_day(c.arrival, i, s.owners_final, c.horizon_days);
    return total;
}

std::string trial_csv(const SynthConfig& c) {
    std::ostringstream os;
    write_transactions(os, generate_trial(c));
    return os.str();
}

}  // namespace

TEST_CASE("generator rejects invalid configurations", "[synth]") {
    auto base = one_cluster_config(10, 30);
    CHECK_NOTHROW(validate_synth_config(base));

    auto c = base;
    c.horizon_days = 0;
    CHECK_THROWS_AS(generate_trial(c), UsageError);
    c = base;
    c.weekday_multipliers = {2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    CHECK_THROWS_AS(generate_trial(c), UsageError);
    c = base;
    c.season_multipliers = {-1.0, 2.0, 2.0, 1.0};
    CHECK_THROWS_AS(generate_trial(c), UsageError);
    c = base;
    c.peak_plug_share = 1.5;
    CHECK_THROWS_AS(generate_trial(c), UsageError);
    c = base;
    c.noise_cv = -0.1;
    CHECK_THROWS_AS(generate_trial(c), UsageError);
    c = base;
    c.clusters[1].capacity_kwh.clear();
    CHECK_THROWS_AS(generate_trial(c), UsageError);
    c = base;
    c.clusters[1].rating_kw = 0.0;
    CHECK_THROWS_AS(generate_trial(c), UsageError);
    c = base;
    c.clusters[1].mean_kwh_per_charge = 0.0;
    CHECK_THROWS_AS(generate_trial(c), UsageError);
    c = base;
    c.clusters[1].owners_final = -1;
    CHECK_THROWS_AS(generate_trial(c), UsageError);
}

TEST_CASE("empty fleets generate no sessions", "[synth]") {
    auto c = one_cluster_config(0, 100);
    CHECK(generate_trial(c).empty());
    c.clusters.clear();
    CHECK(generate_trial(c).empty());
}

TEST_CASE("generated sessions satisfy the ingest contract end to end", "[synth]") {
    const auto cfg = one_cluster_config(60, 120);
    const auto txns = generate_trial(cfg);
    REQUIRE(!txns.empty());

    for (const auto& t : txns) {
        CHECK(t.consumed_kwh > 0.0);
        CHECK(t.consumed_kwh <= t.car_kwh);
        CHECK(t.plug_in <= t.active_start);
        CHECK(t.active_start <= t.plug_out);
        CHECK(!t.participant_id.empty());
        CHECK(!t.charger_id.empty());
        CHECK(t.car_kw > 0.0);
    }
    for (std::size_t i = 1; i < txns.size(); ++i) {
        const Date prev = date_of(txns[i - 1].plug_in), cur = date_of(txns[i].plug_in);
        CHECK((prev < cur || (prev == cur && txns[i - 1].participant_id < txns[i].participant_id)));
    }

    std::ostringstream os;
    write_transactions(os, txns);
    std::istringstream is(os.str());
    const auto parsed = parse_transactions(is);
    CHECK(parsed.rejects.rejects.empty());
    CHECK(parsed.records.size() == txns.size());
}

TEST_CASE("owner arrivals reconstruct to the configured fleet size", "[synth]") {
    auto cfg = one_cluster_config(40, 200);
    const auto series = build_daily_series(generate_trial(cfg), synth_cluster_map(cfg));
    REQUIRE(series.size() == 1);
    const auto& rows = series[0].rows;
    REQUIRE(!rows.empty());
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].owners >= rows[i - 1].owners);
    CHECK(rows.front().owners < 40);
    CHECK(rows.back().owners == 40);

    cfg.arrival = ArrivalSchedule::Step;
    const auto step = build_daily_series(generate_trial(cfg), synth_cluster_map(cfg));
    REQUIRE(step.size() == 1);
    CHECK(step[0].rows.front().owners == 40);
    CHECK(step[0].rows.front().date == cfg.start_date);
}

TEST_CASE("published cluster statistics are reproduced", "[synth]") {
    SynthConfig cfg = default_synth_config();
    cfg.seed = 42;
    const auto txns = generate_trial(cfg);
    const auto clusters = synth_cluster_map(cfg);

    std::map<int, long> sessions, peak;
    std::map<int, double> energy;
    for (const auto& t : txns) {
        const int c = clusters.at(t.participant_id);
        sessions[c] += 1;
        energy[c] += t.consumed_kwh;
        const long s = seconds_past_midnight(t.plug_in);
        if (s >= 17 * 3600 && s < 19 * 3600) peak[c] += 1;
    }

    long total_sessions = 0, total_peak = 0;
    for (const auto& [id, stats] : cfg.clusters) {
        const double mean_kwh = energy[id] / static_cast<double>(sessions[id]);
        const double rate = static_cast<double>(sessions[id]) / static_cast<double>(active_days(cfg, id));
        INFO("cluster " << id);
        // The published +-0.5 kWh check belongs to cluster 1's 200-owner
        // fleet; the smaller wide-battery fleets get a proportional bound.
        const double kwh_tol = id == 1 ? 0.5 : 0.04 * stats.mean_kwh_per_charge;
        CHECK(std::abs(mean_kwh - stats.mean_kwh_per_charge) <= kwh_tol);
        CHECK(std::abs(rate - stats.charges_per_day) <= 0.05);
        total_sessions += sessions[id];
        total_peak += peak[id];
    }
    const double peak_share = static_cast<double>(total_peak) / static_cast<double>(total_sessions);
    CHECK(std::abs(peak_share - 0.28) <= 0.03);
}

TEST_CASE("weekday multipliers shape the schedule and cap at one", "[synth]") {
    SynthConfig cfg;
    cfg.horizon_days = 70;
    cfg.arrival = ArrivalSchedule::Step;
    cfg.clusters[1] = {50, {10.0}, 5.0, 0.9, 3.5, EvType::PHEV};
    cfg.weekday_multipliers = {2.0, 5.0 / 6, 5.0 / 6, 5.0 / 6, 5.0 / 6, 5.0 / 6, 5.0 / 6};
    cfg.seed = 7;
    REQUIRE(weekday_of(cfg.start_date) == Weekday::Mon);

    const auto txns = generate_trial(cfg);
    long monday = 0, other = 0;
    for (const auto& t : txns) {
        if (weekday_of(date_of(t.plug_in)) == Weekday::Mon) monday += 1;
        else other += 1;
    }
    CHECK(monday == 50 * 10);
    const double other_rate = static_cast<double>(other) / (50.0 * 60.0);
    CHECK(std::abs(other_rate - 0.75) <= 0.05);
}

TEST_CASE("season multipliers follow the calendar", "[synth]") {
    SynthConfig cfg;
    cfg.horizon_days = 365;
    cfg.start_date = *parse_date("2017-03-01");
    cfg.arrival = ArrivalSchedule::Step;
    cfg.clusters[2] = {30, {30.0}, 14.0, 0.5, 7.0, EvType::BEV};
    cfg.season_multipliers = {0.0, 4.0 / 3, 4.0 / 3, 4.0 / 3};
    cfg.seed = 5;

    const auto txns = generate_trial(cfg);
    REQUIRE(!txns.empty());
    std::map<Season, long> by_season;
    for (const auto& t : txns) by_season[season_of(date_of(t.plug_in))] += 1;
    CHECK(by_season.count(Season::Winter) == 0);
    CHECK(by_season[Season::Spring] > 0);
    CHECK(by_season[Season::Summer] > 0);
    CHECK(by_season[Season::Autumn] > 0);
}

TEST_CASE("identical seeds reproduce the byte stream", "[synth]") {
    auto cfg = one_cluster_config(25, 90);
    cfg.seed = 11;
    const auto a = trial_csv(cfg);
    const auto b = trial_csv(cfg);
    CHECK(a == b);
    cfg.seed = 12;
    CHECK(trial_csv(cfg) != a);
}
