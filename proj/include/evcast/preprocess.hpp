#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "evcast/errors.hpp"
#include "evcast/series.hpp"
#include "evcast/stl.hpp"

namespace evcast {

namespace detail {

/// Linear interpolation across missing runs; leading/trailing gaps copy the
/// nearest observed value.
inline std::vector<double> interp_linear(const std::vector<double>& v, const std::vector<bool>& observed) {
    const int n = static_cast<int>(v.size());
    std::vector<double> out = v;
    int prev = -1;
    for (int i = 0; i < n; ++i) {
        if (!observed[static_cast<std::size_t>(i)]) continue;
        if (prev < 0) {
            for (int t = 0; t < i; ++t) out[static_cast<std::size_t>(t)] = v[static_cast<std::size_t>(i)];
        } else if (i - prev > 1) {
            const double a = v[static_cast<std::size_t>(prev)], b = v[static_cast<std::size_t>(i)];
            for (int t = prev + 1; t < i; ++t)
                out[static_cast<std::size_t>(t)] =
                    a + (b - a) * static_cast<double>(t - prev) / static_cast<double>(i - prev);
        }
        prev = i;
    }
    if (prev >= 0)
        for (int t = prev + 1; t < n; ++t) out[static_cast<std::size_t>(t)] = v[static_cast<std::size_t>(prev)];
    return out;
}

/// R-7 quantile of a sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

/// Fills missing entries by (1) seasonally adjusting with a periodic STL fit,
/// (2) linearly interpolating the adjusted series between observed anchors,
/// (3) adding the seasonal back. The fill is iterated to a fixpoint because
/// the STL fit itself depends on the filled values. Observed entries pass
/// through untouched. Falls back to plain interpolation when the observed
/// span is too short for a seasonal fit.
inline std::vector<double> impute_missing_values(const std::vector<double>& values,
                                                 const std::vector<bool>& observed, int period = 7) {
    const int n = static_cast<int>(values.size());
    if (n == 0) throw DataError("impute: empty series");
    long n_obs = 0;
    for (bool b : observed) n_obs += b ? 1 : 0;
    if (n_obs == 0) throw DataError("impute: no observed points");
    if (n_obs == n) return values;
    if (n_obs < 2) throw DataError("impute: need at least two observed points");
    if (n_obs < 2 * period || n < 2 * period) return detail::interp_linear(values, observed);

    double scale = 1.0;
    for (int i = 0; i < n; ++i)
        if (observed[static_cast<std::size_t>(i)]) scale = std::max(scale, std::abs(values[static_cast<std::size_t>(i)]));

    std::vector<double> filled = detail::interp_linear(values, observed);
    StlOptions opt;
    opt.inner = 10;
    opt.outer = 1;
    opt.tol = 1e-11 * scale;

    for (int round = 0; round < 60; ++round) {
        const StlDecomposition dec = stl(filled, period, true, opt);
        std::vector<double> adjusted(filled.size());
        for (std::size_t i = 0; i < filled.size(); ++i) adjusted[i] = filled[i] - dec.seasonal[i];
        const std::vector<double> adj_interp = detail::interp_linear(adjusted, observed);

        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
            if (observed[static_cast<std::size_t>(i)]) continue;
            const double v = adj_interp[static_cast<std::size_t>(i)] + dec.seasonal[static_cast<std::size_t>(i)];
            delta = std::max(delta, std::abs(v - filled[static_cast<std::size_t>(i)]));
            filled[static_cast<std::size_t>(i)] = v;
        }
        if (delta < 1e-9 * scale) break;
    }
    return filled;
}

/// Indices whose STL remainder falls outside [Q1 - 3 IQR, Q3 + 3 IQR]. The
/// fence is widened by a tiny scale-relative epsilon so that remainders at
/// round-off level are never flagged.
inline std::vector<std::size_t> detect_outliers(const std::vector<double>& values, int period = 7) {
    const StlDecomposition dec = stl(values, period, true);
    std::vector<double> sorted = dec.remainder;
    std::sort(sorted.begin(), sorted.end());
    const double q1 = detail::quantile_sorted(sorted, 0.25);
    const double q3 = detail::quantile_sorted(sorted, 0.75);
    const double iqr = q3 - q1;
    double scale = 1.0;
    for (double v : values) scale = std::max(scale, std::abs(v));
    const double eps = 1e-9 * scale;
    const double lo = q1 - 3.0 * iqr - eps, hi = q3 + 3.0 * iqr + eps;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dec.remainder.size(); ++i)
        if (dec.remainder[i] < lo || dec.remainder[i] > hi) out.push_back(i);
    return out;
}

/// Replaces the flagged entries with trend + seasonal from a fresh STL fit;
/// everything else passes through.
inline std::vector<double> replace_outliers(const std::vector<double>& values,
                                            const std::vector<std::size_t>& indices, int period = 7) {
    if (indices.empty()) return values;
    const StlDecomposition dec = stl(values, period, true);
    std::vector<double> out = values;
    for (std::size_t i : indices) out[i] = dec.trend[i] + dec.seasonal[i];
    return out;
}

/// Min-max scaler; fitted bounds come from the training span only.
struct Scaler {
    double lo = 0.0;
    double hi = 1.0;

    double apply(double v) const { return (v - lo) / (hi - lo); }
    double invert(double v) const { return lo + v * (hi - lo); }

    std::vector<double> apply(const std::vector<double>& v) const {
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = apply(v[i]);
        return out;
    }
    std::vector<double> invert(const std::vector<double>& v) const {
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = invert(v[i]);
        return out;
    }
};

inline Scaler minmax_fit(const std::vector<double>& values) {
    if (values.empty()) throw DataError("minmax_fit: empty input");
    Scaler s;
    s.lo = *std::min_element(values.begin(), values.end());
    s.hi = *std::max_element(values.begin(), values.end());
    if (!(s.hi > s.lo)) throw NumericError("minmax_fit: constant series");
    return s;
}

struct SeriesCleanReport {
    std::vector<std::size_t> imputed_rows;
    std::map<std::string, std::vector<std::size_t>> outliers;  // column -> flagged row indices
};

namespace detail {

inline void clamp_imputed_row(DailyRow& r) {
    r.trans = std::max<long>(r.trans, 0);
    r.users = std::max<long>(r.users, 0);
    r.users = std::min(r.users, r.trans);
    r.users = std::min(r.users, r.owners);
    r.demand = std::max(r.demand, 0.0);
    r.consumed = std::clamp(r.consumed, 0.0, r.demand);
}

}  // namespace detail

/// Expands the series to a contiguous daily grid. Per-day activity columns
/// are imputed seasonally; owners carries forward as a step function.
inline DailyClusterSeries impute_missing_days(const DailyClusterSeries& s,
                                              SeriesCleanReport* report = nullptr) {
    if (s.rows.empty()) throw DataError("impute_missing_days: empty series");
    for (std::size_t i = 1; i < s.rows.size(); ++i)
        if (!(s.rows[i - 1].date < s.rows[i].date))
            throw DataError("impute_missing_days: rows must be strictly date-ordered");

    const Date first = s.rows.front().date, last = s.rows.back().date;
    const int n = static_cast<int>((last - first).count()) + 1;
    if (n == static_cast<int>(s.rows.size())) return s;

    std::vector<bool> observed(static_cast<std::size_t>(n), false);
    std::vector<double> users(static_cast<std::size_t>(n), 0.0), trans(static_cast<std::size_t>(n), 0.0),
        demand(static_cast<std::size_t>(n), 0.0), consumed(static_cast<std::size_t>(n), 0.0);
    std::vector<long> owners(static_cast<std::size_t>(n), 0);
    for (const auto& r : s.rows) {
        const std::size_t i = static_cast<std::size_t>((r.date - first).count());
        observed[i] = true;
        users[i] = static_cast<double>(r.users);
        trans[i] = static_cast<double>(r.trans);
        demand[i] = r.demand;
        consumed[i] = r.consumed;
        owners[i] = r.owners;
    }

    users = impute_missing_values(users, observed);
    trans = impute_missing_values(trans, observed);
    demand = impute_missing_values(demand, observed);
    consumed = impute_missing_values(consumed, observed);

    DailyClusterSeries out;
    out.cluster = s.cluster;
    out.rows.reserve(static_cast<std::size_t>(n));
    std::size_t src = 0;
    long running_owners = 0;
    for (int i = 0; i < n; ++i) {
        const Date d = first + std::chrono::days(i);
        if (observed[static_cast<std::size_t>(i)]) {
            out.rows.push_back(s.rows[src++]);
            running_owners = out.rows.back().owners;
            continue;
        }
        DailyRow r;
        r.date = d;
        r.day = weekday_of(d);
        r.season = season_of(d);
        r.owners = running_owners;
        r.users = std::llround(users[static_cast<std::size_t>(i)]);
        r.trans = std::llround(trans[static_cast<std::size_t>(i)]);
        r.demand = demand[static_cast<std::size_t>(i)];
        r.consumed = consumed[static_cast<std::size_t>(i)];
        detail::clamp_imputed_row(r);
        out.rows.push_back(r);
        if (report) report->imputed_rows.push_back(static_cast<std::size_t>(i));
    }
    return out;
}

/// Outlier pass over the activity columns of a contiguous series. Flagged
/// values are replaced by their seasonal fit; count columns are re-rounded
/// and rows re-clamped to the series invariants.
inline DailyClusterSeries replace_series_outliers(const DailyClusterSeries& s,
                                                  SeriesCleanReport* report = nullptr) {
    DailyClusterSeries out = s;
    if (static_cast<int>(s.rows.size()) < 2 * DailyClusterSeries::period) return out;

    const char* columns[4] = {"users", "trans", "demand", "consumed"};
    std::map<std::size_t, bool> touched;
    for (const char* col : columns) {
        std::vector<double> v = out.column(col);
        const std::vector<std::size_t> idx = detect_outliers(v);
        if (report) report->outliers[col] = idx;
        if (idx.empty()) continue;
        v = replace_outliers(v, idx);
        for (std::size_t i : idx) {
            DailyRow& r = out.rows[i];
            if (std::string(col) == "users") r.users = std::llround(v[i]);
            else if (std::string(col) == "trans") r.trans = std::llround(v[i]);
            else if (std::string(col) == "demand") r.demand = v[i];
            else r.consumed = v[i];
            touched[i] = true;
        }
    }
    for (auto& [i, _] : touched) detail::clamp_imputed_row(out.rows[i]);
    return out;
}

}  // namespace evcast
