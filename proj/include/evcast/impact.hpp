#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "calendar.hpp"
#include "errors.hpp"
#include "forecaster.hpp"

namespace evcast {

// Low-voltage network model: one transformer, parallel residential feeders,
// each feeder serving a fixed number of households with a cluster mix that
// decides which EV types connect to it.
struct NetworkConfig {
    double transformer_kva = 500.0;
    int n_feeders = 4;
    int households_per_feeder = 96;
    double feeder_capacity_kva = 125.0;
    double base_load_kva_per_household = 1.0;
    double power_factor = 0.98;
    double peak_window_h = 2.0;
    std::map<int, double> rating_kw = {{1, 3.5}, {2, 7.0}, {3, 7.0}};
    std::map<int, double> peak_user_fraction = {{1, 0.38}, {2, 0.35}, {3, 0.34}};
    std::map<int, double> mean_kwh_per_user = {{1, 5.68}, {2, 14.30}, {3, 26.80}};
    // feeder id -> (cluster id -> share of that feeder's households)
    std::map<int, std::map<int, double>> feeder_mix = {
        {1, {{1, 1.0}}},
        {2, {{2, 1.0}}},
        {3, {{1, 0.7}, {3, 0.3}}},
        {4, {{2, 0.7}, {3, 0.3}}},
    };
};

inline void validate_network_config(const NetworkConfig& config) {
    if (config.transformer_kva <= 0.0)
        throw UsageError("network config: transformer capacity must be positive");
    if (config.feeder_capacity_kva <= 0.0)
        throw UsageError("network config: feeder capacity must be positive");
    if (config.households_per_feeder <= 0)
        throw UsageError("network config: households per feeder must be positive");
    if (config.base_load_kva_per_household < 0.0)
        throw UsageError("network config: base load must be non-negative");
    if (config.power_factor <= 0.0 || config.power_factor > 1.0)
        throw UsageError("network config: power factor must lie in (0, 1]");
    if (config.peak_window_h <= 0.0)
        throw UsageError("network config: peak window must be positive");
    if (config.n_feeders != static_cast<int>(config.feeder_mix.size()))
        throw UsageError("network config: feeder count does not match feeder mix");
    for (const auto& [cluster, kw] : config.rating_kw)
        if (kw <= 0.0)
            throw UsageError("network config: rating for cluster " + std::to_string(cluster) +
                             " must be positive");
    for (const auto& [cluster, frac] : config.peak_user_fraction)
        if (frac < 0.0 || frac > 1.0)
            throw UsageError("network config: peak user fraction for cluster " +
                             std::to_string(cluster) + " must lie in [0, 1]");
    for (const auto& [cluster, kwh] : config.mean_kwh_per_user)
        if (kwh <= 0.0)
            throw UsageError("network config: mean consumption for cluster " +
                             std::to_string(cluster) + " must be positive");
    for (const auto& [feeder, mix] : config.feeder_mix) {
        if (mix.empty())
            throw UsageError("network config: feeder " + std::to_string(feeder) +
                             " has an empty cluster mix");
        double total = 0.0;
        for (const auto& [cluster, share] : mix) {
            if (share < 0.0)
                throw UsageError("network config: negative mix share on feeder " +
                                 std::to_string(feeder));
            if (!config.rating_kw.count(cluster) || !config.peak_user_fraction.count(cluster) ||
                !config.mean_kwh_per_user.count(cluster))
                throw UsageError("network config: feeder " + std::to_string(feeder) +
                                 " references cluster " + std::to_string(cluster) +
                                 " without rating, peak fraction, and mean consumption");
            total += share;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw UsageError("network config: mix shares on feeder " + std::to_string(feeder) +
                             " must sum to 1");
    }
}

// Control policies from the trial: consumption control caps the energy each
// session may draw, user control disconnects a fraction of would-be users.
enum class ControlKind { ConsumptionControl, UserControl };

inline constexpr std::array<double, 5> kControlLevels = {0.0, 0.2, 0.4, 0.6, 0.8};
inline constexpr std::array<double, 5> kPenetrations = {0.2, 0.4, 0.6, 0.8, 1.0};

struct ControlPolicy {
    ControlKind kind = ControlKind::ConsumptionControl;
    double level = 0.0;
};

inline const char* control_kind_name(ControlKind kind) {
    return kind == ControlKind::ConsumptionControl ? "consumption_control" : "user_control";
}

inline void validate_policy(const ControlPolicy& policy) {
    for (double c : kControlLevels)
        if (std::abs(policy.level - c) <= 1e-12) return;
    throw UsageError("control policy: level must be one of 0, 0.2, 0.4, 0.6, 0.8");
}

// Expected users charging on a given day, for a cluster-level fleet of n_evs.
// Either a fixed charging-rate table or a trained per-cluster forecaster.
using UserForecastProvider =
    std::function<double(int cluster, double n_evs, Season season, Weekday day)>;

inline UserForecastProvider rate_user_provider(
    std::map<int, double> charges_per_day = {{1, 0.68}, {2, 0.44}, {3, 0.36}}) {
    return [rates = std::move(charges_per_day)](int cluster, double n_evs, Season, Weekday) {
        auto it = rates.find(cluster);
        if (it == rates.end())
            throw UsageError("user provider: no charging rate for cluster " +
                             std::to_string(cluster));
        return n_evs * it->second;
    };
}

inline UserForecastProvider forecaster_user_provider(std::map<int, TrainedForecaster> models) {
    auto shared = std::make_shared<std::map<int, TrainedForecaster>>(std::move(models));
    return [shared](int cluster, double n_evs, Season season, Weekday day) {
        auto it = shared->find(cluster);
        if (it == shared->end())
            throw UsageError("user provider: no forecaster for cluster " +
                             std::to_string(cluster));
        ScenarioFrame frame;
        frame.rows.push_back({static_cast<long>(std::llround(n_evs)), day, season});
        return it->second.predict(frame).at(0);
    };
}

// Users simultaneously drawing power inside the evening peak window.
inline double peak_users(const NetworkConfig& config, int cluster, double n_evs,
                         const UserForecastProvider& provider, Season season, Weekday day) {
    if (n_evs < 0.0) throw UsageError("peak_users: fleet size must be non-negative");
    auto it = config.peak_user_fraction.find(cluster);
    if (it == config.peak_user_fraction.end())
        throw UsageError("peak_users: no peak user fraction for cluster " +
                         std::to_string(cluster));
    return provider(cluster, n_evs, season, day) * it->second;
}

// Apparent EV power at the peak. Consumption control stretches sessions but
// leaves the connected-user draw intact; user control removes users.
inline double ev_load_kva(const NetworkConfig& config,
                          const std::map<int, double>& peak_users_by_cluster,
                          const ControlPolicy& policy) {
    validate_policy(policy);
    double kw = 0.0;
    for (const auto& [cluster, users] : peak_users_by_cluster) {
        if (users < 0.0) throw UsageError("ev_load_kva: negative user count");
        auto it = config.rating_kw.find(cluster);
        if (it == config.rating_kw.end())
            throw UsageError("ev_load_kva: no rating for cluster " + std::to_string(cluster));
        double effective = policy.kind == ControlKind::UserControl ? users * (1.0 - policy.level)
                                                                   : users;
        kw += effective * it->second;
    }
    return kw / config.power_factor;
}

// Hours a peak user's session lasts. Consumption control trims the energy
// delivered; user control leaves accepted sessions untouched.
inline double charging_duration_h(const NetworkConfig& config, int cluster,
                                  double mean_kwh_per_user, const ControlPolicy& policy) {
    validate_policy(policy);
    if (mean_kwh_per_user < 0.0)
        throw UsageError("charging_duration_h: consumption must be non-negative");
    auto it = config.rating_kw.find(cluster);
    if (it == config.rating_kw.end())
        throw UsageError("charging_duration_h: no rating for cluster " + std::to_string(cluster));
    double kwh = policy.kind == ControlKind::ConsumptionControl
                     ? mean_kwh_per_user * (1.0 - policy.level)
                     : mean_kwh_per_user;
    return kwh / it->second;
}

struct ImpactResult {
    int feeder = 0;
    Season season = Season::Winter;
    double penetration = 0.0;
    ControlPolicy policy;
    std::map<int, double> peak_users;
    double ev_load_kva = 0.0;
    double base_load_kva = 0.0;
    double agg_load_kva = 0.0;
    double margin_kva = 0.0;
    std::map<int, double> duration_h;
};

// Feeder-level peak load for one scenario cell.
inline ImpactResult aggregate_load(const NetworkConfig& config, int feeder, Season season,
                                   double penetration, const ControlPolicy& policy,
                                   const UserForecastProvider& provider,
                                   Weekday day = Weekday::Wed) {
    validate_network_config(config);
    validate_policy(policy);
    if (penetration < 0.0 || penetration > 1.0)
        throw UsageError("aggregate_load: penetration must lie in [0, 1]");
    auto mix_it = config.feeder_mix.find(feeder);
    if (mix_it == config.feeder_mix.end())
        throw UsageError("aggregate_load: unknown feeder " + std::to_string(feeder));

    ImpactResult out;
    out.feeder = feeder;
    out.season = season;
    out.penetration = penetration;
    out.policy = policy;
    for (const auto& [cluster, share] : mix_it->second) {
        double n_evs = config.households_per_feeder * penetration * share;
        out.peak_users[cluster] = peak_users(config, cluster, n_evs, provider, season, day);
        out.duration_h[cluster] =
            charging_duration_h(config, cluster, config.mean_kwh_per_user.at(cluster), policy);
    }
    out.ev_load_kva = ev_load_kva(config, out.peak_users, policy);
    out.base_load_kva = config.households_per_feeder * config.base_load_kva_per_household;
    out.agg_load_kva = out.base_load_kva + out.ev_load_kva;
    out.margin_kva = config.feeder_capacity_kva - out.agg_load_kva;
    return out;
}

// Full scenario grid: every feeder, season, penetration step, policy kind,
// and control level, in that nesting order.
inline std::vector<ImpactResult> sweep(const NetworkConfig& config,
                                       const UserForecastProvider& provider,
                                       Weekday day = Weekday::Wed) {
    validate_network_config(config);
    constexpr std::array<Season, 4> seasons = {Season::Winter, Season::Spring, Season::Summer,
                                               Season::Autumn};
    constexpr std::array<ControlKind, 2> kinds = {ControlKind::ConsumptionControl,
                                                  ControlKind::UserControl};
    std::vector<ImpactResult> out;
    out.reserve(config.feeder_mix.size() * seasons.size() * kPenetrations.size() * kinds.size() *
                kControlLevels.size());
    for (const auto& [feeder, mix] : config.feeder_mix)
        for (Season season : seasons)
            for (double penetration : kPenetrations)
                for (ControlKind kind : kinds)
                    for (double level : kControlLevels)
                        out.push_back(aggregate_load(config, feeder, season, penetration,
                                                     {kind, level}, provider, day));
    return out;
}

// Smallest user-control level whose peak load fits the feeder capacity.
inline std::optional<double> min_control_for_capacity(const NetworkConfig& config, int feeder,
                                                      Season season, double penetration,
                                                      const UserForecastProvider& provider,
                                                      Weekday day = Weekday::Wed) {
    for (double level : kControlLevels) {
        ImpactResult r = aggregate_load(config, feeder, season, penetration,
                                        {ControlKind::UserControl, level}, provider, day);
        if (r.agg_load_kva <= config.feeder_capacity_kva) return level;
    }
    return std::nullopt;
}

namespace detail {

inline std::vector<int> impact_clusters(const std::vector<ImpactResult>& results) {
    std::vector<int> clusters;
    for (const auto& r : results)
        for (const auto& [cluster, _] : r.peak_users)
            if (std::find(clusters.begin(), clusters.end(), cluster) == clusters.end())
                clusters.push_back(cluster);
    std::sort(clusters.begin(), clusters.end());
    return clusters;
}

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace detail

inline void write_impact_csv(std::ostream& os, const std::vector<ImpactResult>& results) {
    std::vector<int> clusters = detail::impact_clusters(results);
    os << "feeder,season,penetration,policy,level,base_load_kva,ev_load_kva,agg_load_kva,"
          "margin_kva";
    for (int c : clusters) os << ",peak_users_c" << c;
    for (int c : clusters) os << ",duration_h_c" << c;
    os << "\n";
    for (const auto& r : results) {
        os << r.feeder << ',' << kSeasonNames[static_cast<int>(r.season)] << ','
           << detail::fixed6(r.penetration) << ',' << control_kind_name(r.policy.kind) << ','
           << detail::fixed6(r.policy.level) << ',' << detail::fixed6(r.base_load_kva) << ','
           << detail::fixed6(r.ev_load_kva) << ',' << detail::fixed6(r.agg_load_kva) << ','
           << detail::fixed6(r.margin_kva);
        for (int c : clusters) {
            auto it = r.peak_users.find(c);
            os << ',' << detail::fixed6(it == r.peak_users.end() ? 0.0 : it->second);
        }
        for (int c : clusters) {
            auto it = r.duration_h.find(c);
            os << ',' << detail::fixed6(it == r.duration_h.end() ? 0.0 : it->second);
        }
        os << "\n";
    }
}

// Plot-ready data: aggregate load against penetration for each feeder and
// control level, one policy kind per call, uncontrolled baseline included.
inline void write_load_vs_penetration_csv(std::ostream& os,
                                          const std::vector<ImpactResult>& results,
                                          ControlKind kind, Season season) {
    os << "feeder,level,penetration,agg_load_kva,margin_kva\n";
    for (const auto& r : results) {
        if (r.policy.kind != kind || r.season != season) continue;
        os << r.feeder << ',' << detail::fixed6(r.policy.level) << ','
           << detail::fixed6(r.penetration) << ',' << detail::fixed6(r.agg_load_kva) << ','
           << detail::fixed6(r.margin_kva) << "\n";
    }
}

inline void write_duration_vs_level_csv(std::ostream& os,
                                        const std::vector<ImpactResult>& results, int feeder,
                                        Season season) {
    std::vector<int> clusters = detail::impact_clusters(results);
    os << "policy,level";
    for (int c : clusters) os << ",duration_h_c" << c;
    os << "\n";
    for (const auto& r : results) {
        if (r.feeder != feeder || r.season != season) continue;
        if (std::abs(r.penetration - 1.0) > 1e-12) continue;
        os << control_kind_name(r.policy.kind) << ',' << detail::fixed6(r.policy.level);
        for (int c : clusters) {
            auto it = r.duration_h.find(c);
            os << ',' << detail::fixed6(it == r.duration_h.end() ? 0.0 : it->second);
        }
        os << "\n";
    }
}

}  // namespace evcast
