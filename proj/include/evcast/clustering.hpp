#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "evcast/errors.hpp"
#include "evcast/numeric.hpp"
#include "evcast/rng.hpp"
#include "evcast/transactions.hpp"

namespace evcast {

/// Per-owner charging behaviour over the whole observation window.
struct OwnerSummary {
    std::string participant_id;
    double battery_kwh = 0.0;
    double mean_kwh_per_charge = 0.0;
    double charges_per_day = 0.0;
    long n_transactions = 0;
    long active_days = 0;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline double dist2(const Point2& a, const Point2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}

/// One summary per distinct participant, ordered by participant_id.
/// active_days is the inclusive civil-day span from first to last plug-in.
inline std::vector<OwnerSummary> summarize_owners(const std::vector<ChargingTransaction>& txns) {
    struct Acc {
        std::vector<double> consumed;
        double battery = 0.0;
        Date first{}, last{};
        bool seen = false;
    };
    std::map<std::string, Acc> by_owner;
    for (const auto& t : txns) {
        Acc& a = by_owner[t.participant_id];
        a.consumed.push_back(t.consumed_kwh);
        a.battery = std::max(a.battery, t.car_kwh);
        const Date d = date_of(t.plug_in);
        if (!a.seen) {
            a.first = a.last = d;
            a.seen = true;
        } else {
            a.first = std::min(a.first, d);
            a.last = std::max(a.last, d);
        }
    }
    std::vector<OwnerSummary> out;
    out.reserve(by_owner.size());
    for (auto& [id, a] : by_owner) {
        OwnerSummary s;
        s.participant_id = id;
        s.battery_kwh = a.battery;
        s.n_transactions = static_cast<long>(a.consumed.size());
        s.active_days = (a.last - a.first).count() + 1;
        s.mean_kwh_per_charge = stable_sum(std::move(a.consumed)) / static_cast<double>(s.n_transactions);
        s.charges_per_day = static_cast<double>(s.n_transactions) / static_cast<double>(s.active_days);
        out.push_back(std::move(s));
    }
    return out;
}

struct MinMaxBounds {
    double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;

    Point2 apply(const Point2& p) const {
        auto scale = [](double v, double lo, double hi) {
            return hi > lo ? (v - lo) / (hi - lo) : 0.0;
        };
        return {scale(p.x, x_min, x_max), scale(p.y, y_min, y_max)};
    }
};

inline MinMaxBounds minmax_bounds(const std::vector<Point2>& pts) {
    MinMaxBounds b;
    if (pts.empty()) return b;
    b.x_min = b.x_max = pts[0].x;
    b.y_min = b.y_max = pts[0].y;
    for (const auto& p : pts) {
        b.x_min = std::min(b.x_min, p.x);
        b.x_max = std::max(b.x_max, p.x);
        b.y_min = std::min(b.y_min, p.y);
        b.y_max = std::max(b.y_max, p.y);
    }
    return b;
}

struct KmeansFit {
    std::vector<Point2> centroids;      // ordered ascending by (x, y)
    std::vector<int> assignment;        // per input point, 0-based
    double wcss = 0.0;
    int iterations = 0;
    std::vector<double> wcss_history;   // one entry per Lloyd pass
};

namespace detail {

/// Canonical processing order: points sorted by (x, y) regardless of how the
/// caller arranged them. Makes every accumulation order-independent.
inline std::vector<std::size_t> canonical_order(const std::vector<Point2>& pts) {
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pts[a].x != pts[b].x) return pts[a].x < pts[b].x;
        return pts[a].y < pts[b].y;
    });
    return order;
}

inline int nearest_centroid(const Point2& p, const std::vector<Point2>& centroids) {
    int best = 0;
    double best_d = dist2(p, centroids[0]);
    for (int c = 1; c < static_cast<int>(centroids.size()); ++c) {
        const double d = dist2(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Runs to an assignment fixpoint
/// or 300 passes. Result is identical for any permutation of the input, up to
/// point order in `assignment`; cluster labels are canonical (centroids
/// sorted ascending).
inline KmeansFit kmeans(const std::vector<Point2>& pts, int k, std::uint64_t seed) {
    const int n = static_cast<int>(pts.size());
    if (k < 1) throw UsageError("kmeans: k must be >= 1");
    if (n < k) throw UsageError("kmeans: need at least k points");

    const auto order = detail::canonical_order(pts);
    std::vector<Point2> sorted(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = pts[order[i]];

    Rng rng(seed);

    // k-means++ seeding over the canonical ordering.
    std::vector<Point2> centroids;
    centroids.reserve(static_cast<std::size_t>(k));
    centroids.push_back(sorted[rng.uniform_int(static_cast<std::uint64_t>(n))]);
    std::vector<double> d2(sorted.size());
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, dist2(sorted[i], c));
            d2[i] = best;
            total += best;
        }
        int pick;
        if (total <= 0.0) {
            pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        } else {
            const double u = rng.uniform01() * total;
            double cum = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum >= u) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(sorted[pick]);
    }

    std::vector<int> assign(sorted.size(), -1);
    KmeansFit fit;
    constexpr int kMaxIter = 300;
    for (int iter = 0; iter < kMaxIter; ++iter) {
        std::vector<int> next(sorted.size());
        for (int i = 0; i < n; ++i) next[i] = detail::nearest_centroid(sorted[i], centroids);

        // Relocate any emptied centroid onto the point that is currently
        // worst served, then give that point to it.
        for (int c = 0; c < k; ++c) {
            if (std::find(next.begin(), next.end(), c) != next.end()) continue;
            int worst = 0;
            double worst_d = -1.0;
            for (int i = 0; i < n; ++i) {
                const double d = dist2(sorted[i], centroids[next[i]]);
                if (d > worst_d) {
                    worst_d = d;
                    worst = i;
                }
            }
            centroids[c] = sorted[worst];
            next[worst] = c;
        }

        double wcss = 0.0;
        for (int i = 0; i < n; ++i) wcss += dist2(sorted[i], centroids[next[i]]);
        fit.wcss_history.push_back(wcss);

        const bool converged = (next == assign);
        assign = std::move(next);
        fit.iterations = iter + 1;
        if (converged) break;

        for (int c = 0; c < k; ++c) {
            Point2 mean{0.0, 0.0};
            long count = 0;
            for (int i = 0; i < n; ++i) {
                if (assign[i] != c) continue;
                mean.x += sorted[i].x;
                mean.y += sorted[i].y;
                ++count;
            }
            if (count > 0) centroids[c] = {mean.x / static_cast<double>(count), mean.y / static_cast<double>(count)};
        }
    }

    // Canonical labels: clusters renumbered by ascending centroid.
    std::vector<int> label_order(static_cast<std::size_t>(k));
    std::iota(label_order.begin(), label_order.end(), 0);
    std::stable_sort(label_order.begin(), label_order.end(), [&](int a, int b) {
        if (centroids[a].x != centroids[b].x) return centroids[a].x < centroids[b].x;
        return centroids[a].y < centroids[b].y;
    });
    std::vector<int> relabel(static_cast<std::size_t>(k));
    for (int new_c = 0; new_c < k; ++new_c) relabel[static_cast<std::size_t>(label_order[new_c])] = new_c;

    fit.centroids.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) fit.centroids[static_cast<std::size_t>(relabel[static_cast<std::size_t>(c)])] = centroids[static_cast<std::size_t>(c)];
    fit.assignment.assign(pts.size(), -1);
    for (std::size_t i = 0; i < order.size(); ++i)
        fit.assignment[order[i]] = relabel[static_cast<std::size_t>(assign[i])];

    std::vector<double> terms(sorted.size());
    for (int i = 0; i < n; ++i) terms[static_cast<std::size_t>(i)] = dist2(sorted[i], fit.centroids[static_cast<std::size_t>(relabel[static_cast<std::size_t>(assign[i])])]);
    fit.wcss = stable_sum(std::move(terms));
    return fit;
}

struct ElbowResult {
    int k = 1;
    std::vector<double> wcss_curve;  // wcss_curve[i] is WCSS at k = i + 1
};

/// Smallest k whose WCSS drop to k+1, measured against the total dispersion
/// at k=1, falls below theta. Runs one seeded fit per candidate k.
inline ElbowResult elbow_select(const std::vector<Point2>& pts, int k_max, std::uint64_t seed,
                                double theta = 0.10) {
    if (k_max < 2) throw UsageError("elbow_select: k_max must be >= 2");
    k_max = std::min<int>(k_max, static_cast<int>(pts.size()));

    ElbowResult res;
    for (int k = 1; k <= k_max; ++k)
        res.wcss_curve.push_back(kmeans(pts, k, derive_seed(seed, "kmeans", static_cast<std::uint64_t>(k))).wcss);

    const double total = res.wcss_curve.front();
    if (total <= 0.0) {
        res.k = 1;
        return res;
    }
    for (int k = 1; k < k_max; ++k) {
        const double cur = res.wcss_curve[static_cast<std::size_t>(k - 1)];
        const double nxt = res.wcss_curve[static_cast<std::size_t>(k)];
        const double drop = (cur - nxt) / total;
        if (drop < theta) {
            res.k = k;
            return res;
        }
    }
    res.k = k_max;
    return res;
}

/// Battery-capacity bands per cluster, in kWh. Clusters are numbered from 1.
inline constexpr double kCapacityBands[3][2] = {{4.4, 18.7}, {22.0, 41.0}, {60.0, 100.0}};

/// Total, monotone map from battery capacity to a cluster number. Values in a
/// gap between bands go to the nearer boundary; exact midpoints go down.
inline int assign_capacity_band(double battery_kwh) {
    if (battery_kwh <= kCapacityBands[0][1]) return 1;
    if (battery_kwh < kCapacityBands[1][0])
        return battery_kwh - kCapacityBands[0][1] <= kCapacityBands[1][0] - battery_kwh ? 1 : 2;
    if (battery_kwh <= kCapacityBands[1][1]) return 2;
    if (battery_kwh < kCapacityBands[2][0])
        return battery_kwh - kCapacityBands[1][1] <= kCapacityBands[2][0] - battery_kwh ? 2 : 3;
    return 3;
}

/// Fitted clustering of owner summaries. Cluster ids are 1-based and ordered
/// by ascending battery capacity.
struct ClusterModel {
    int k = 0;
    std::vector<Point2> centroids;                 // normalized feature space
    MinMaxBounds bounds;                           // normalization used for the fit
    std::map<std::string, int> assignments;        // participant_id -> 1-based cluster
    std::vector<double> wcss_curve;                // index i holds WCSS at k = i + 1
    std::vector<std::pair<double, double>> capacity_bands;  // per cluster (min, max) kWh

    int cluster_of(const std::string& participant_id) const {
        auto it = assignments.find(participant_id);
        if (it == assignments.end())
            throw DataError("cluster model: unknown participant '" + participant_id + "'");
        return it->second;
    }
};

/// Clusters owners on (battery_kwh, mean_kwh_per_charge), min-max normalized,
/// with elbow-selected k.
inline ClusterModel fit_cluster_model(const std::vector<OwnerSummary>& owners, int k_max,
                                      std::uint64_t seed, double theta = 0.10) {
    if (owners.empty()) throw DataError("fit_cluster_model: no owners");

    std::vector<Point2> raw(owners.size());
    for (std::size_t i = 0; i < owners.size(); ++i)
        raw[i] = {owners[i].battery_kwh, owners[i].mean_kwh_per_charge};
    const MinMaxBounds bounds = minmax_bounds(raw);
    std::vector<Point2> pts(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) pts[i] = bounds.apply(raw[i]);

    ClusterModel model;
    model.bounds = bounds;
    const ElbowResult elbow = elbow_select(pts, std::min<int>(k_max, static_cast<int>(pts.size())), seed, theta);
    model.k = elbow.k;
    model.wcss_curve = elbow.wcss_curve;

    const KmeansFit fit = kmeans(pts, model.k, derive_seed(seed, "kmeans", static_cast<std::uint64_t>(model.k)));
    model.centroids = fit.centroids;

    model.capacity_bands.assign(static_cast<std::size_t>(model.k),
                                {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    for (std::size_t i = 0; i < owners.size(); ++i) {
        const int c = fit.assignment[i] + 1;
        model.assignments[owners[i].participant_id] = c;
        auto& band = model.capacity_bands[static_cast<std::size_t>(c - 1)];
        band.first = std::min(band.first, owners[i].battery_kwh);
        band.second = std::max(band.second, owners[i].battery_kwh);
    }
    return model;
}

inline void to_json(nlohmann::json& j, const Point2& p) { j = nlohmann::json{{"x", p.x}, {"y", p.y}}; }
inline void from_json(const nlohmann::json& j, Point2& p) {
    j.at("x").get_to(p.x);
    j.at("y").get_to(p.y);
}

inline void to_json(nlohmann::json& j, const MinMaxBounds& b) {
    j = nlohmann::json{{"x_min", b.x_min}, {"x_max", b.x_max}, {"y_min", b.y_min}, {"y_max", b.y_max}};
}
inline void from_json(const nlohmann::json& j, MinMaxBounds& b) {
    j.at("x_min").get_to(b.x_min);
    j.at("x_max").get_to(b.x_max);
    j.at("y_min").get_to(b.y_min);
    j.at("y_max").get_to(b.y_max);
}

inline void to_json(nlohmann::json& j, const ClusterModel& m) {
    j = nlohmann::json{{"k", m.k},
                       {"centroids", m.centroids},
                       {"bounds", m.bounds},
                       {"assignments", m.assignments},
                       {"wcss_curve", m.wcss_curve},
                       {"capacity_bands", m.capacity_bands}};
}
inline void from_json(const nlohmann::json& j, ClusterModel& m) {
    j.at("k").get_to(m.k);
    j.at("centroids").get_to(m.centroids);
    j.at("bounds").get_to(m.bounds);
    j.at("assignments").get_to(m.assignments);
    j.at("wcss_curve").get_to(m.wcss_curve);
    j.at("capacity_bands").get_to(m.capacity_bands);
}

}  // namespace evcast
