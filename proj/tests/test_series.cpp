#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "evcast/rng.hpp"
#include "evcast/series.hpp"

using namespace evcast;

namespace {

ChargingTransaction make_txn(const std::string& pid, double kwh, double consumed,
                             const std::string& when) {
    ChargingTransaction t;
    t.charger_id = "CH";
    t.participant_id = pid;
    t.car_kw = 7.0;
    t.car_kwh = kwh;
    t.group_id = "G";
    t.trial_stage = TrialStage::T1;
    t.plug_in = *parse_timestamp(when);
    t.active_start = t.plug_in;
    t.plug_out = t.plug_in + std::chrono::hours(4);
    t.consumed_kwh = consumed;
    t.ev_type = EvType::BEV;
    return t;
}

}  // namespace

TEST_CASE("single session produces one fully described row", "[series]") {
    const std::map<std::string, int> cmap = {{"P1", 1}};
    const auto out = build_daily_series({make_txn("P1", 40, 12, "2017-03-01 08:00")}, cmap);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].rows.size() == 1);
    const auto& r = out[0].rows[0];
    CHECK(r.users == 1);
    CHECK(r.trans == 1);
    CHECK(r.demand == 40.0);
    CHECK(r.consumed == 12.0);
    CHECK(r.owners == 1);
    CHECK(r.day == Weekday::Wed);
    CHECK(r.season == Season::Spring);
}

TEST_CASE("demand sums battery capacity per session", "[series]") {
    const std::map<std::string, int> cmap = {{"A", 1}, {"B", 1}, {"C", 1}};
    const std::vector<ChargingTransaction> txns = {make_txn("A", 40, 10, "2017-03-01 08:00"),
                                                   make_txn("B", 40, 11, "2017-03-01 09:00"),
                                                   make_txn("C", 22, 5, "2017-03-01 10:00")};
    const auto out = build_daily_series(txns, cmap);
    REQUIRE(out[0].rows.size() == 1);
    CHECK(out[0].rows[0].demand == 102.0);
    CHECK(out[0].rows[0].users == 3);
    CHECK(out[0].rows[0].trans == 3);
    CHECK(out[0].rows[0].demand >= out[0].rows[0].consumed);
}

TEST_CASE("owners accumulates distinct participants by first appearance", "[series]") {
    const std::map<std::string, int> cmap = {{"A", 1}, {"B", 1}};
    const std::vector<ChargingTransaction> txns = {
        make_txn("A", 40, 10, "2017-03-01 08:00"), make_txn("A", 40, 10, "2017-03-02 08:00"),
        make_txn("B", 40, 10, "2017-03-03 08:00"), make_txn("A", 40, 10, "2017-03-03 18:00"),
        make_txn("B", 40, 10, "2017-03-05 08:00")};
    const auto out = build_daily_series(txns, cmap);
    REQUIRE(out[0].rows.size() == 4);
    CHECK(out[0].rows[0].owners == 1);
    CHECK(out[0].rows[1].owners == 1);
    CHECK(out[0].rows[2].owners == 2);
    CHECK(out[0].rows[3].owners == 2);
    CHECK(out[0].rows[2].users == 2);
    CHECK(out[0].rows[3].users == 1);
    for (std::size_t i = 1; i < out[0].rows.size(); ++i)
        CHECK(out[0].rows[i].owners >= out[0].rows[i - 1].owners);
}

TEST_CASE("consumed energy is conserved per cluster", "[series]") {
    Rng r(42);
    std::vector<ChargingTransaction> txns;
    const std::map<std::string, int> cmap = {{"A", 1}, {"B", 1}, {"C", 2}};
    double expect[3] = {0.0, 0.0, 0.0};
    const char* pids[3] = {"A", "B", "C"};
    for (int i = 0; i < 300; ++i) {
        const int who = static_cast<int>(r.uniform_int(3));
        const int day = 1 + static_cast<int>(r.uniform_int(28));
        char buf[32];
        std::snprintf(buf, sizeof buf, "2017-03-%02d 0%d:00", day, 1 + static_cast<int>(r.uniform_int(9)));
        const double e = r.uniform(0.5, 35.0);
        txns.push_back(make_txn(pids[who], 40, e, buf));
        expect[cmap.at(pids[who]) - 1] += e;
    }
    const auto out = build_daily_series(txns, cmap);
    REQUIRE(out.size() == 2);
    for (const auto& s : out) {
        double got = 0.0;
        for (const auto& row : s.rows) {
            got += row.consumed;
            CHECK(row.demand >= row.consumed);
            CHECK(row.users <= row.trans);
            CHECK(row.users <= row.owners);
        }
        CHECK(got == Catch::Approx(expect[s.cluster - 1]).epsilon(1e-9));
    }
}

TEST_CASE("series build does not depend on transaction order", "[series]") {
    Rng r(7);
    std::vector<ChargingTransaction> txns;
    const std::map<std::string, int> cmap = {{"A", 1}, {"B", 1}};
    for (int i = 0; i < 100; ++i) {
        const int day = 1 + static_cast<int>(r.uniform_int(20));
        char buf[32];
        std::snprintf(buf, sizeof buf, "2017-04-%02d 08:00", day);
        txns.push_back(make_txn(i % 2 ? "A" : "B", 30 + r.uniform01(), r.uniform(1.0, 20.0), buf));
    }
    auto shuffled = txns;
    r.shuffle(shuffled);
    const auto a = build_daily_series(txns, cmap);
    const auto b = build_daily_series(shuffled, cmap);
    REQUIRE(a.size() == b.size());
    for (std::size_t s = 0; s < a.size(); ++s) {
        REQUIRE(a[s].rows.size() == b[s].rows.size());
        for (std::size_t i = 0; i < a[s].rows.size(); ++i) {
            CHECK(a[s].rows[i].date == b[s].rows[i].date);
            CHECK(a[s].rows[i].demand == b[s].rows[i].demand);
            CHECK(a[s].rows[i].consumed == b[s].rows[i].consumed);
            CHECK(a[s].rows[i].users == b[s].rows[i].users);
            CHECK(a[s].rows[i].trans == b[s].rows[i].trans);
            CHECK(a[s].rows[i].owners == b[s].rows[i].owners);
        }
    }
}

TEST_CASE("unmapped participant is an error", "[series]") {
    const std::map<std::string, int> cmap = {{"A", 1}};
    CHECK_THROWS_AS(build_daily_series({make_txn("Z", 40, 5, "2017-03-01 08:00")}, cmap), DataError);
}

TEST_CASE("series csv round-trips", "[series]") {
    const std::map<std::string, int> cmap = {{"A", 1}, {"B", 1}};
    const std::vector<ChargingTransaction> txns = {make_txn("A", 40, 10.5, "2017-03-01 08:00"),
                                                   make_txn("B", 22, 7.25, "2017-03-02 09:00")};
    const auto out = build_daily_series(txns, cmap);
    std::ostringstream os;
    write_series_csv(os, out[0]);
    std::istringstream is(os.str());
    const auto back = read_series_csv(is, out[0].cluster);
    REQUIRE(back.rows.size() == out[0].rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i) {
        CHECK(back.rows[i].date == out[0].rows[i].date);
        CHECK(back.rows[i].day == out[0].rows[i].day);
        CHECK(back.rows[i].season == out[0].rows[i].season);
        CHECK(back.rows[i].owners == out[0].rows[i].owners);
        CHECK(back.rows[i].demand == out[0].rows[i].demand);
        CHECK(back.rows[i].consumed == out[0].rows[i].consumed);
    }
}
