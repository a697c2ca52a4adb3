#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evcast/errors.hpp"
#include "evcast/features.hpp"
#include "evcast/forecaster.hpp"
#include "evcast/numeric.hpp"
#include "evcast/rng.hpp"
#include "evcast/series.hpp"

namespace evcast {

/// Mean absolute percentage error, reported in percent. Each term is turned
/// into a percentage before summing so that exact-ratio inputs keep exact
/// percentage values.
inline double mape(const std::vector<double>& actual, const std::vector<double>& forecast) {
    if (actual.size() != forecast.size()) throw UsageError("mape: length mismatch");
    if (actual.empty()) throw UsageError("mape: empty input");
    std::vector<double> terms(actual.size());
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] == 0.0)
            throw DataError("mape: actual value is zero at position " + std::to_string(i));
        terms[i] = 100.0 * std::abs(actual[i] - forecast[i]) / std::abs(actual[i]);
    }
    return stable_sum(std::move(terms)) / static_cast<double>(actual.size());
}

/// Scores of one model recipe at the three chronological origins.
struct OriginEval {
    std::vector<int> train_sizes;
    std::vector<double> origin_mape;
    double mean_mape = 0.0;
};

inline constexpr std::array<int, 3> kOriginPercents{70, 80, 90};

/// Runs `run(train_len)` at origins placed at 70/80/90 percent of the series
/// and scores each returned suffix forecast against the held-out actuals.
/// The callable must fit strictly inside the first train_len rows.
template <typename RunFn>
inline OriginEval variable_origin_eval(const std::vector<double>& actual, RunFn&& run) {
    const int n = static_cast<int>(actual.size());
    OriginEval ev;
    for (int pct : kOriginPercents) {
        const int train_len = n * pct / 100;
        if (train_len < 1 || train_len >= n)
            throw DataError("variable_origin_eval: series too short for origin splits");
        const std::vector<double> pred = run(train_len);
        if (static_cast<int>(pred.size()) != n - train_len)
            throw UsageError("variable_origin_eval: recipe returned wrong forecast length");
        const std::vector<double> test(actual.begin() + train_len, actual.end());
        ev.train_sizes.push_back(train_len);
        ev.origin_mape.push_back(mape(test, pred));
    }
    double total = 0.0;
    for (double m : ev.origin_mape) total += m;
    ev.mean_mape = total / static_cast<double>(ev.origin_mape.size());
    return ev;
}

enum class FeatureSet { Base, PUsers, PTrans, PDemand };

inline constexpr std::array<FeatureSet, 4> kFeatureSets{FeatureSet::Base, FeatureSet::PUsers,
                                                        FeatureSet::PTrans, FeatureSet::PDemand};

inline const char* feature_set_name(FeatureSet s) {
    switch (s) {
        case FeatureSet::Base: return "base";
        case FeatureSet::PUsers: return "p_users";
        case FeatureSet::PTrans: return "p_trans";
        case FeatureSet::PDemand: return "p_demand";
    }
    return "base";
}

inline std::vector<std::string> extras_for(FeatureSet s) {
    switch (s) {
        case FeatureSet::Base: return {};
        case FeatureSet::PUsers: return {"p_users"};
        case FeatureSet::PTrans: return {"p_trans"};
        case FeatureSet::PDemand: return {"p_demand"};
    }
    return {};
}

/// The intermediate targets forecast before consumption, in causal order.
inline constexpr std::array<const char*, 3> kPTargets{"users", "trans", "demand"};

inline DailyClusterSeries series_prefix(const DailyClusterSeries& s, std::size_t len) {
    if (len > s.rows.size()) throw UsageError("series_prefix: length exceeds series");
    DailyClusterSeries out;
    out.cluster = s.cluster;
    out.rows.assign(s.rows.begin(), s.rows.begin() + static_cast<std::ptrdiff_t>(len));
    return out;
}

/// Scenario rows for the days after the training window, no p-features.
inline ScenarioFrame test_base_frame(const DailyClusterSeries& s, std::size_t train_len) {
    if (train_len > s.rows.size()) throw UsageError("test_base_frame: length exceeds series");
    ScenarioFrame f;
    f.rows.reserve(s.rows.size() - train_len);
    for (std::size_t i = train_len; i < s.rows.size(); ++i)
        f.rows.push_back({s.rows[i].owners, s.rows[i].day, s.rows[i].season});
    return f;
}

/// Training frame for consumption models: scenario rows plus the observed
/// users, transactions, and demand columns under the same names the test
/// frame uses for their forecasts.
inline ScenarioFrame training_frame(const DailyClusterSeries& s) {
    ScenarioFrame f = scenario_from_series(s);
    for (const char* target : kPTargets)
        f.p_features[std::string("p_") + target] = s.column(target);
    return f;
}

/// Fits one model per intermediate target on the scenario features over the
/// training rows and appends the test-window forecasts as p-feature columns.
inline ScenarioFrame build_p_features(const DailyClusterSeries& train,
                                      const ScenarioFrame& test_base, ModelFamily family,
                                      const FitOptions& opt) {
    const ScenarioFrame base_train = scenario_from_series(train);
    ScenarioFrame out = test_base;
    for (std::size_t j = 0; j < kPTargets.size(); ++j) {
        FitOptions o = opt;
        o.seed = derive_seed(opt.seed, "p-feature", j);
        const auto tf = fit_forecaster(base_train, train.column(kPTargets[j]), {}, family, o);
        out.p_features[std::string("p_") + kPTargets[j]] = tf.predict(test_base);
    }
    return out;
}

/// Refinement may only borrow a feature from causally upstream targets:
/// users precedes transactions and demand, and transactions never feed
/// demand.
inline void check_refine_pair(const std::string& target, const std::string& source) {
    const bool ok = (target == "trans" && source == "users") ||
                    (target == "demand" && source == "users");
    if (!ok)
        throw UsageError("refinement of '" + target + "' from '" + source +
                         "' violates the causal feature order");
}

/// Candidate re-forecast of one target with an upstream p-feature appended.
/// The training column holds observed source values; the test column holds
/// the source forecasts already in the frame.
inline std::vector<double> refine_candidate(const DailyClusterSeries& train,
                                            const ScenarioFrame& frame, ModelFamily family,
                                            const FitOptions& opt, const std::string& target,
                                            const std::string& source) {
    check_refine_pair(target, source);
    const std::string col = "p_" + source;
    ScenarioFrame train_frame = scenario_from_series(train);
    train_frame.p_features[col] = train.column(source);
    const auto tf = fit_forecaster(train_frame, train.column(target), {col}, family, opt);
    return tf.predict(frame);
}

struct RefineDecision {
    std::string target;
    std::string source;
    bool replaced = false;
    double incumbent_mape = 0.0;
    double candidate_mape = 0.0;
};

inline void to_json(nlohmann::json& j, const RefineDecision& d) {
    j = nlohmann::json{{"target", d.target},
                       {"source", d.source},
                       {"replaced", d.replaced},
                       {"incumbent_mape", d.incumbent_mape},
                       {"candidate_mape", d.candidate_mape}};
}

inline void from_json(const nlohmann::json& j, RefineDecision& d) {
    j.at("target").get_to(d.target);
    j.at("source").get_to(d.source);
    j.at("replaced").get_to(d.replaced);
    j.at("incumbent_mape").get_to(d.incumbent_mape);
    j.at("candidate_mape").get_to(d.candidate_mape);
}

struct RefineResult {
    ScenarioFrame frame;
    std::vector<RefineDecision> decisions;
};

/// Single refinement pass in causal order. A candidate replaces the
/// incumbent column only when its MAPE against the held-out actuals is
/// strictly lower; ties keep the incumbent. Every comparison is recorded so
/// deployment runs can replay the outcome without actuals.
inline RefineResult refine_p_features(const DailyClusterSeries& train, const ScenarioFrame& frame,
                                      ModelFamily family, const FitOptions& opt,
                                      const std::map<std::string, std::vector<double>>& test_actuals) {
    RefineResult r{frame, {}};
    std::size_t idx = 0;
    for (const char* raw : kPTargets) {
        const std::string target = raw;
        if (target == "users") continue;
        const std::string source = "users";
        FitOptions o = opt;
        o.seed = derive_seed(opt.seed, "refine", idx);
        ++idx;
        const auto it = test_actuals.find(target);
        if (it == test_actuals.end())
            throw UsageError("refine_p_features: missing held-out actuals for '" + target + "'");
        const auto candidate = refine_candidate(train, r.frame, family, o, target, source);
        RefineDecision d;
        d.target = target;
        d.source = source;
        d.incumbent_mape = mape(it->second, r.frame.p_feature("p_" + target));
        d.candidate_mape = mape(it->second, candidate);
        d.replaced = d.candidate_mape < d.incumbent_mape;
        if (d.replaced) r.frame.p_features["p_" + target] = candidate;
        r.decisions.push_back(std::move(d));
    }
    return r;
}

/// Applies previously recorded refinement decisions to a fresh frame. The
/// derived seeds match the recording pass, so a replayed replacement
/// reproduces the evaluation-time candidate exactly.
inline ScenarioFrame replay_refinements(const DailyClusterSeries& train, const ScenarioFrame& frame,
                                        ModelFamily family, const FitOptions& opt,
                                        const std::vector<RefineDecision>& decisions) {
    ScenarioFrame out = frame;
    std::size_t idx = 0;
    for (const auto& d : decisions) {
        FitOptions o = opt;
        o.seed = derive_seed(opt.seed, "refine", idx);
        ++idx;
        if (!d.replaced) continue;
        out.p_features["p_" + d.target] = refine_candidate(train, out, family, o, d.target, d.source);
    }
    return out;
}

/// Consumption forecast for one feature set. The model trains on observed
/// intermediate columns and predicts from the refined frame's p-feature
/// columns of the same names.
inline std::vector<double> forecast_consumption(const DailyClusterSeries& train,
                                                const ScenarioFrame& refined, ModelFamily family,
                                                FeatureSet set, const FitOptions& opt) {
    const auto tf =
        fit_forecaster(training_frame(train), train.column("consumed"), extras_for(set), family, opt);
    return tf.predict(refined);
}

/// Users forecasts come from the scenario features alone.
inline std::vector<double> forecast_users(const DailyClusterSeries& train,
                                          const ScenarioFrame& frame, ModelFamily family,
                                          const FitOptions& opt,
                                          const std::vector<std::string>& requested_extras = {}) {
    if (!requested_extras.empty())
        throw UsageError("forecast_users: user counts are modeled on scenario features only");
    const auto tf = fit_forecaster(scenario_from_series(train), train.column("users"), {}, family, opt);
    return tf.predict(frame);
}

struct EvalCell {
    ModelFamily family = ModelFamily::Regression;
    FeatureSet set = FeatureSet::Base;
    std::vector<int> train_sizes;
    std::vector<double> origin_mape;
    double mean_mape = 0.0;
};

struct EvaluationReport {
    int cluster = 0;
    std::vector<EvalCell> cells;

    const EvalCell& cell(FeatureSet set, ModelFamily family) const {
        for (const auto& c : cells)
            if (c.set == set && c.family == family) return c;
        throw UsageError("evaluation report: no cell for the requested feature set and family");
    }

    /// Feature-set rows by family columns, mean MAPE per cell.
    std::string to_csv() const {
        std::vector<ModelFamily> families;
        for (const auto& c : cells) {
            bool seen = false;
            for (auto f : families) seen = seen || f == c.family;
            if (!seen) families.push_back(c.family);
        }
        std::string out = "feature_set";
        for (auto f : families) {
            out += ',';
            out += family_name(f);
        }
        out += '\n';
        for (auto s : kFeatureSets) {
            bool any = false;
            for (const auto& c : cells) any = any || c.set == s;
            if (!any) continue;
            out += feature_set_name(s);
            for (auto f : families) {
                out += ',';
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6f", cell(s, f).mean_mape);
                out += buf;
            }
            out += '\n';
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json cell_rows = nlohmann::json::array();
        for (const auto& c : cells)
            cell_rows.push_back(nlohmann::json{{"family", family_name(c.family)},
                                               {"feature_set", feature_set_name(c.set)},
                                               {"train_sizes", c.train_sizes},
                                               {"origin_mape", c.origin_mape},
                                               {"mean_mape", c.mean_mape}});
        return nlohmann::json{{"cluster", cluster}, {"cells", std::move(cell_rows)}};
    }
};

/// Full evaluation matrix for one cluster: every feature set crossed with
/// every requested family at the three origins. P-features and their
/// refinement are computed once per family and origin and shared by the four
/// feature-set cells.
inline EvaluationReport evaluate_cluster(const DailyClusterSeries& series,
                                         const std::vector<ModelFamily>& families,
                                         const FitOptions& opt) {
    const std::size_t n = series.rows.size();
    const auto consumed = series.column("consumed");

    EvaluationReport report;
    report.cluster = series.cluster;
    for (auto set : kFeatureSets)
        for (auto family : families) {
            EvalCell c;
            c.family = family;
            c.set = set;
            report.cells.push_back(std::move(c));
        }
    auto cell_at = [&](FeatureSet set, ModelFamily family) -> EvalCell& {
        for (auto& c : report.cells)
            if (c.set == set && c.family == family) return c;
        throw UsageError("evaluate_cluster: missing cell");
    };

    for (int pct : kOriginPercents) {
        const std::size_t train_len = n * static_cast<std::size_t>(pct) / 100;
        if (train_len < 1 || train_len >= n)
            throw DataError("evaluate_cluster: series too short for origin splits");
        const auto prefix = series_prefix(series, train_len);
        const auto test_base = test_base_frame(series, train_len);
        std::map<std::string, std::vector<double>> actuals;
        for (const char* target : kPTargets) {
            const auto full = series.column(target);
            actuals[target] = std::vector<double>(full.begin() + static_cast<std::ptrdiff_t>(train_len),
                                                  full.end());
        }
        const std::vector<double> consumed_test(consumed.begin() + static_cast<std::ptrdiff_t>(train_len),
                                                consumed.end());

        for (auto family : families) {
            const std::uint64_t fseed = derive_seed(opt.seed, family_name(family));
            FitOptions o_p = opt;
            o_p.seed = derive_seed(fseed, "p-features", train_len);
            const auto pframe = build_p_features(prefix, test_base, family, o_p);
            FitOptions o_r = opt;
            o_r.seed = derive_seed(fseed, "refine-pass", train_len);
            const auto refined = refine_p_features(prefix, pframe, family, o_r, actuals);

            for (auto set : kFeatureSets) {
                FitOptions o_c = opt;
                o_c.seed = derive_seed(derive_seed(fseed, feature_set_name(set)), "cell", train_len);
                const auto pred = forecast_consumption(prefix, refined.frame, family, set, o_c);
                auto& c = cell_at(set, family);
                c.train_sizes.push_back(static_cast<int>(train_len));
                c.origin_mape.push_back(mape(consumed_test, pred));
            }
        }
    }

    for (auto& c : report.cells) {
        double total = 0.0;
        for (double m : c.origin_mape) total += m;
        c.mean_mape = total / static_cast<double>(c.origin_mape.size());
    }
    return report;
}

}  // namespace evcast
