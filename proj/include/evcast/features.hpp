#pragma once

#include <map>
#include <string>
#include <vector>

#include "evcast/calendar.hpp"
#include "evcast/errors.hpp"
#include "evcast/preprocess.hpp"
#include "evcast/series.hpp"

namespace evcast {

/// One scenario row: the three drivers every forecast starts from.
struct ScenarioRow {
    long owners = 0;
    Weekday day = Weekday::Mon;
    Season season = Season::Winter;
};

/// Scenario rows plus optional appended numeric columns (p-features).
struct ScenarioFrame {
    std::vector<ScenarioRow> rows;
    std::map<std::string, std::vector<double>> p_features;

    std::size_t size() const { return rows.size(); }

    const std::vector<double>& p_feature(const std::string& name) const {
        auto it = p_features.find(name);
        if (it == p_features.end()) throw UsageError("scenario frame: missing p-feature '" + name + "'");
        if (it->second.size() != rows.size())
            throw UsageError("scenario frame: p-feature '" + name + "' length mismatch");
        return it->second;
    }
};

inline ScenarioFrame scenario_from_series(const DailyClusterSeries& s) {
    ScenarioFrame f;
    f.rows.reserve(s.rows.size());
    for (const auto& r : s.rows) f.rows.push_back({r.owners, r.day, r.season});
    return f;
}

/// Fixed encoding: scaled owners, 6 weekday indicators (Monday reference),
/// 3 season indicators (Winter reference), then scaled extra columns in
/// declared order. Scalers are fitted once on the training frame.
struct FeatureDescriptor {
    Scaler owners_scaler;
    std::vector<std::string> extra;               // p-feature columns, in order
    std::map<std::string, Scaler> extra_scalers;

    std::size_t width() const { return 1 + 6 + 3 + extra.size(); }
};

inline FeatureDescriptor fit_feature_descriptor(const ScenarioFrame& train,
                                                const std::vector<std::string>& extra = {}) {
    if (train.rows.empty()) throw DataError("fit_feature_descriptor: empty frame");
    FeatureDescriptor d;
    std::vector<double> owners;
    owners.reserve(train.rows.size());
    for (const auto& r : train.rows) owners.push_back(static_cast<double>(r.owners));
    const double lo = *std::min_element(owners.begin(), owners.end());
    const double hi = *std::max_element(owners.begin(), owners.end());
    // A flat training column still has to encode; unit span keeps it defined.
    d.owners_scaler = hi > lo ? minmax_fit(owners) : Scaler{lo - 0.5, lo + 0.5};

    d.extra = extra;
    for (const auto& name : extra) {
        const auto& col = train.p_feature(name);
        const double clo = *std::min_element(col.begin(), col.end());
        const double chi = *std::max_element(col.begin(), col.end());
        d.extra_scalers[name] = chi > clo ? minmax_fit(col) : Scaler{clo - 0.5, clo + 0.5};
    }
    return d;
}

inline std::vector<std::vector<double>> encode_features(const FeatureDescriptor& d,
                                                        const ScenarioFrame& frame) {
    std::vector<std::vector<double>> out;
    out.reserve(frame.rows.size());
    for (std::size_t i = 0; i < frame.rows.size(); ++i) {
        const auto& r = frame.rows[i];
        std::vector<double> row;
        row.reserve(d.width());
        row.push_back(d.owners_scaler.apply(static_cast<double>(r.owners)));
        for (int w = 1; w < 7; ++w) row.push_back(static_cast<int>(r.day) == w ? 1.0 : 0.0);
        for (int s = 1; s < 4; ++s) row.push_back(static_cast<int>(r.season) == s ? 1.0 : 0.0);
        for (const auto& name : d.extra)
            row.push_back(d.extra_scalers.at(name).apply(frame.p_feature(name)[i]));
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace evcast
