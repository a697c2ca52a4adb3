#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "evcast/calendar.hpp"
#include "evcast/errors.hpp"
#include "evcast/rng.hpp"
#include "evcast/transactions.hpp"

namespace evcast {

enum class ArrivalSchedule { Linear, Step };

/// Per-cluster generator calibration. Battery sizes are a discrete list
/// spanning the cluster's capacity band; each owner keeps one battery for
/// the whole trial. Session energy is drawn around a per-owner mean scaled
/// by battery size so the cluster-level mean lands on mean_kwh_per_charge.
struct SynthClusterStats {
    int owners_final = 0;
    std::vector<double> capacity_kwh;
    double mean_kwh_per_charge = 0.0;
    double charges_per_day = 0.0;
    double rating_kw = 0.0;
    EvType ev_type = EvType::BEV;
};

struct SynthConfig {
    int horizon_days = 365;
    Date start_date = Date{std::chrono::year{2017} / 1 / 2};
    ArrivalSchedule arrival = ArrivalSchedule::Linear;
    std::map<int, SynthClusterStats> clusters;
    std::array<double, 7> weekday_multipliers{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    std::array<double, 4> season_multipliers{1.0, 1.0, 1.0, 1.0};
    double peak_plug_share = 0.28;
    double noise_cv = 0.3;
    std::uint64_t seed = 0;
};

/// Three clusters matching the published summary: small plug-in hybrids
/// charging often, mid-size EVs, and large-battery EVs charging rarely.
inline SynthConfig default_synth_config() {
    SynthConfig c;
    c.clusters[1] = {200, {4.4, 6.1, 8.8, 12.0, 16.0, 18.7}, 5.68, 0.68, 3.5, EvType::PHEV};
    c.clusters[2] = {180, {22.0, 24.0, 28.5, 33.0, 38.3, 41.0}, 14.30, 0.44, 7.0, EvType::BEV};
    c.clusters[3] = {75, {60.0, 64.0, 75.0, 90.0, 100.0}, 26.80, 0.36, 7.0, EvType::BEV};
    return c;
}

inline void validate_synth_config(const SynthConfig& c) {
    if (c.horizon_days < 1) throw UsageError("synth: horizon_days must be positive");
    if (c.peak_plug_share < 0.0 || c.peak_plug_share > 1.0)
        throw UsageError("synth: peak_plug_share must lie in [0,1]");
    if (c.noise_cv < 0.0) throw UsageError("synth: noise_cv must be non-negative");

    auto check_multipliers = [](const double* m, int n, const char* what) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            if (m[i] < 0.0) throw UsageError(std::string("synth: ") + what + " multipliers must be non-negative");
            total += m[i];
        }
        if (std::abs(total / n - 1.0) > 1e-9)
            throw UsageError(std::string("synth: ") + what + " multipliers must average to 1");
    };
    check_multipliers(c.weekday_multipliers.data(), 7, "weekday");
    check_multipliers(c.season_multipliers.data(), 4, "season");

    for (const auto& [id, s] : c.clusters) {
        const std::string tag = "synth: cluster " + std::to_string(id);
        if (s.owners_final < 0) throw UsageError(tag + ": owners_final must be non-negative");
        if (s.capacity_kwh.empty()) throw UsageError(tag + ": capacity list is empty");
        for (double cap : s.capacity_kwh)
            if (cap <= 0.0) throw UsageError(tag + ": capacities must be positive");
        if (s.mean_kwh_per_charge <= 0.0) throw UsageError(tag + ": mean_kwh_per_charge must be positive");
        if (s.charges_per_day < 0.0) throw UsageError(tag + ": charges_per_day must be non-negative");
        if (s.rating_kw <= 0.0) throw UsageError(tag + ": rating_kw must be positive");
    }
}

/// Participant ids by cluster, matching the ids generate_trial emits.
inline std::map<std::string, int> synth_cluster_map(const SynthConfig& c) {
    std::map<std::string, int> out;
    char buf[32];
    for (const auto& [id, s] : c.clusters)
        for (int i = 0; i < s.owners_final; ++i) {
            std::snprintf(buf, sizeof(buf), "c%d_p%04d", id, i);
            out[buf] = id;
        }
    return out;
}

namespace detail {

inline int arrival_day(ArrivalSchedule schedule, int owner, int owners, int horizon) {
    if (schedule == ArrivalSchedule::Step) return 0;
    return static_cast<int>(static_cast<long long>(owner) * horizon / owners);
}

inline double session_energy(Rng& rng, double mean, double sd, double cap) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
        const double e = rng.normal(mean, sd);
        if (e > 0.0 && e <= cap) return e;
    }
    throw NumericError("synth: session energy sampling cannot satisfy the capacity bound");
}

/// Seconds past midnight, with the 17:00-19:00 window receiving exactly
/// peak_share of the probability mass and the rest spread uniformly.
inline int plug_in_second(Rng& rng, double peak_share) {
    constexpr int kPeakStart = 17 * 3600;
    constexpr int kPeakLen = 2 * 3600;
    if (rng.uniform01() < peak_share)
        return kPeakStart + static_cast<int>(rng.uniform01() * kPeakLen);
    const int off = static_cast<int>(rng.uniform01() * (86400 - kPeakLen));
    return off < kPeakStart ? off : off + kPeakLen;
}

}  // namespace detail

/// Generates one synthetic trial. Owners arrive per the schedule and charge
/// at most once per day; the arrival-day session always happens so every
/// owner appears in the data. Per-owner charge rates sit in a 20% band
/// around the cluster mean. Deterministic for a given seed, owner by owner.
inline std::vector<ChargingTransaction> generate_trial(const SynthConfig& cfg) {
    validate_synth_config(cfg);

    std::vector<ChargingTransaction> out;
    char pbuf[32], cbuf[40];
    for (const auto& [cluster_id, stats] : cfg.clusters) {
        if (stats.owners_final == 0) continue;
        double cap_mean = 0.0;
        for (double cap : stats.capacity_kwh) cap_mean += cap;
        cap_mean /= static_cast<double>(stats.capacity_kwh.size());
        const std::uint64_t cluster_seed = derive_seed(cfg.seed, "cluster", static_cast<std::uint64_t>(cluster_id));

        for (int i = 0; i < stats.owners_final; ++i) {
            Rng rng(derive_seed(cluster_seed, "owner", static_cast<std::uint64_t>(i)));
            const double rate = stats.charges_per_day * rng.uniform(0.8, 1.2);
            const double cap = stats.capacity_kwh[rng.uniform_int(stats.capacity_kwh.size())];
            const double mean = stats.mean_kwh_per_charge * cap / cap_mean;
            const double sd = cfg.noise_cv * mean;
            const int arrive = detail::arrival_day(cfg.arrival, i, stats.owners_final, cfg.horizon_days);

            std::snprintf(pbuf, sizeof(pbuf), "c%d_p%04d", cluster_id, i);
            std::snprintf(cbuf, sizeof(cbuf), "ch_%s", pbuf);

            for (int d = arrive; d < cfg.horizon_days; ++d) {
                const Date date = cfg.start_date + std::chrono::days{d};
                const double mult =
                    cfg.weekday_multipliers[static_cast<int>(weekday_of(date))] *
                    cfg.season_multipliers[static_cast<int>(season_of(date))];
                const double p = d == arrive ? 1.0 : std::min(1.0, rate * mult);
                if (!rng.bernoulli(p)) continue;

                ChargingTransaction t;
                t.charger_id = cbuf;
                t.participant_id = pbuf;
                t.car_kw = stats.rating_kw;
                t.car_kwh = cap;
                t.group_id = "g" + std::to_string(cluster_id);
                t.trial_stage = TrialStage::Uncontrolled;
                t.consumed_kwh = detail::session_energy(rng, mean, sd, cap);
                t.plug_in = Timestamp{date} + std::chrono::seconds{detail::plug_in_second(rng, cfg.peak_plug_share)};
                t.active_start = t.plug_in;
                const auto charge_s = static_cast<long long>(std::ceil(t.consumed_kwh / stats.rating_kw * 3600.0));
                t.plug_out = t.active_start + std::chrono::seconds{charge_s};
                t.ev_type = stats.ev_type;
                out.push_back(std::move(t));
            }
        }
    }

    std::sort(out.begin(), out.end(), [](const ChargingTransaction& a, const ChargingTransaction& b) {
        const Date da = date_of(a.plug_in), db = date_of(b.plug_in);
        if (da != db) return da < db;
        return a.participant_id < b.participant_id;
    });
    return out;
}

}  // namespace evcast
