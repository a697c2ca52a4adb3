#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evcast/csv.hpp"
#include "evcast/errors.hpp"
#include "evcast/numeric.hpp"
#include "evcast/rng.hpp"
#include "evcast/tuning.hpp"

namespace evcast {

struct GbtConfig {
    int rounds = 200;
    double learning_rate = 0.1;
    int max_depth = 3;
    double min_child_weight = 1.0;
    double lambda_l2 = 1.0;
    double gamma_split = 0.0;
    double subsample = 1.0;
    double colsample = 1.0;
    std::uint64_t seed = 0;

    bool operator==(const GbtConfig&) const = default;
};

inline void validate_gbt_config(const GbtConfig& c) {
    if (c.rounds < 1 || c.learning_rate <= 0.0 || c.max_depth < 1)
        throw UsageError("gbt config: rounds, learning_rate, and max_depth must be positive");
    if (c.min_child_weight < 0.0 || c.lambda_l2 < 0.0 || c.gamma_split < 0.0)
        throw UsageError("gbt config: min_child_weight, lambda_l2, and gamma_split must be >= 0");
    if (c.subsample <= 0.0 || c.subsample > 1.0 || c.colsample <= 0.0 || c.colsample > 1.0)
        throw UsageError("gbt config: subsample and colsample must lie in (0, 1]");
}

/// feature < 0 marks a leaf; rows with x[feature] < threshold go left.
struct GbtNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double weight = 0.0;
};

using GbtTree = std::vector<GbtNode>;

inline double predict_gbt_tree(const GbtTree& tree, const std::vector<double>& x) {
    int i = 0;
    while (tree[static_cast<std::size_t>(i)].feature >= 0) {
        const GbtNode& n = tree[static_cast<std::size_t>(i)];
        i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    return tree[static_cast<std::size_t>(i)].weight;
}

/// Leaf weights already carry the learning-rate shrinkage, so a prediction is
/// just base plus the sum of tree outputs.
struct GbtModel {
    double base = 0.0;
    int n_features = 0;
    std::vector<GbtTree> trees;
    std::vector<double> loss_curve;
    GbtConfig config;

    double predict_row(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != n_features)
            throw UsageError("gbt predict: feature width mismatch");
        double s = base;
        for (const auto& t : trees) s += predict_gbt_tree(t, x);
        return s;
    }

    std::vector<double> predict(const std::vector<std::vector<double>>& X) const {
        std::vector<double> out;
        out.reserve(X.size());
        for (const auto& x : X) out.push_back(predict_row(x));
        return out;
    }
};

namespace detail {

struct GbtSplit {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

/// Recursive exact-greedy builder. Candidate rows are scanned per feature in
/// (value, gradient) order and leaf sums use stable_sum, so the fitted tree is
/// identical for any permutation of the training rows.
struct GbtTreeBuilder {
    const std::vector<std::vector<double>>& X;
    const std::vector<double>& grads;
    const std::vector<int>& cols;
    const GbtConfig& cfg;
    GbtTree tree;

    double node_grad_sum(const std::vector<int>& rows) const {
        std::vector<double> g;
        g.reserve(rows.size());
        for (int r : rows) g.push_back(grads[static_cast<std::size_t>(r)]);
        return stable_sum(std::move(g));
    }

    GbtSplit best_split(const std::vector<int>& rows, double G, double H) const {
        GbtSplit best;
        const double lam = cfg.lambda_l2;
        const double parent_term = G * G / (H + lam);
        std::vector<std::pair<double, double>> vals;
        for (int f : cols) {
            vals.clear();
            vals.reserve(rows.size());
            for (int r : rows)
                vals.emplace_back(X[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)],
                                  grads[static_cast<std::size_t>(r)]);
            std::sort(vals.begin(), vals.end());
            double GL = 0.0, HL = 0.0;
            for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                GL += vals[i].second;
                HL += 1.0;
                if (vals[i].first == vals[i + 1].first) continue;
                const double HR = H - HL, GR = G - GL;
                if (HL < cfg.min_child_weight || HR < cfg.min_child_weight) continue;
                const double gain =
                    0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent_term) -
                    cfg.gamma_split;
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = f;
                    best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                }
            }
        }
        return best;
    }

    int build(const std::vector<int>& rows, int depth) {
        const double G = node_grad_sum(rows);
        const double H = static_cast<double>(rows.size());
        const int idx = static_cast<int>(tree.size());
        tree.push_back({});
        tree[static_cast<std::size_t>(idx)].weight = -G / (H + cfg.lambda_l2);
        if (depth >= cfg.max_depth || rows.size() < 2) return idx;
        const GbtSplit s = best_split(rows, G, H);
        if (s.feature < 0) return idx;
        std::vector<int> lhs, rhs;
        for (int r : rows) {
            if (X[static_cast<std::size_t>(r)][static_cast<std::size_t>(s.feature)] < s.threshold)
                lhs.push_back(r);
            else
                rhs.push_back(r);
        }
        const int l = build(lhs, depth + 1);
        const int r = build(rhs, depth + 1);
        tree[static_cast<std::size_t>(idx)].feature = s.feature;
        tree[static_cast<std::size_t>(idx)].threshold = s.threshold;
        tree[static_cast<std::size_t>(idx)].left = l;
        tree[static_cast<std::size_t>(idx)].right = r;
        return idx;
    }
};

inline double gbt_mse(const std::vector<double>& yhat, const std::vector<double>& y) {
    std::vector<double> sq;
    sq.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = yhat[i] - y[i];
        sq.push_back(e * e);
    }
    return stable_sum(std::move(sq)) / static_cast<double>(y.size());
}

}  // namespace detail

/// Squared-error boosting: per round the gradient is yhat - y with unit
/// hessian, leaves take -G/(H + lambda), and splits are kept only when the
/// gain formula stays positive after the gamma penalty. Column subsets are
/// drawn per round from the config seed alone. base_override replaces the
/// default mean-of-target starting prediction.
inline GbtModel fit_gbt(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                        const GbtConfig& cfg,
                        std::optional<double> base_override = std::nullopt) {
    validate_gbt_config(cfg);
    if (X.size() != y.size()) throw DataError("fit_gbt: X and y row counts differ");
    if (y.size() < 20) throw DataError("fit_gbt: needs at least 20 training rows");
    const int n = static_cast<int>(y.size());
    const int n_features = static_cast<int>(X.front().size());
    if (n_features < 1) throw DataError("fit_gbt: empty feature rows");
    for (const auto& row : X)
        if (static_cast<int>(row.size()) != n_features)
            throw DataError("fit_gbt: ragged feature matrix");

    GbtModel model;
    model.config = cfg;
    model.n_features = n_features;
    model.base = base_override ? *base_override : stable_sum(y) / static_cast<double>(n);

    std::vector<double> yhat(y.size(), model.base);
    model.loss_curve.push_back(detail::gbt_mse(yhat, y));

    std::vector<int> all_cols(static_cast<std::size_t>(n_features));
    for (int f = 0; f < n_features; ++f) all_cols[static_cast<std::size_t>(f)] = f;
    std::vector<int> all_rows(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) all_rows[static_cast<std::size_t>(r)] = r;

    std::vector<double> grads(y.size());
    for (int round = 0; round < cfg.rounds; ++round) {
        for (std::size_t i = 0; i < y.size(); ++i) grads[i] = yhat[i] - y[i];

        std::vector<int> cols = all_cols;
        if (cfg.colsample < 1.0) {
            const int m = std::max(
                1, static_cast<int>(std::ceil(cfg.colsample * static_cast<double>(n_features))));
            Rng rc(derive_seed(cfg.seed, "gbt-cols", static_cast<std::uint64_t>(round)));
            rc.shuffle(cols);
            cols.resize(static_cast<std::size_t>(m));
            std::sort(cols.begin(), cols.end());
        }

        std::vector<int> rows = all_rows;
        if (cfg.subsample < 1.0) {
            const int m = std::max(
                1, static_cast<int>(std::floor(cfg.subsample * static_cast<double>(n))));
            Rng rs(derive_seed(cfg.seed, "gbt-rows", static_cast<std::uint64_t>(round)));
            rs.shuffle(rows);
            rows.resize(static_cast<std::size_t>(m));
            std::sort(rows.begin(), rows.end());
        }

        detail::GbtTreeBuilder builder{X, grads, cols, cfg, {}};
        builder.build(rows, 0);
        GbtTree tree = std::move(builder.tree);
        for (auto& node : tree)
            if (node.feature < 0) node.weight *= cfg.learning_rate;

        for (std::size_t i = 0; i < y.size(); ++i) yhat[i] += predict_gbt_tree(tree, X[i]);
        model.trees.push_back(std::move(tree));
        model.loss_curve.push_back(detail::gbt_mse(yhat, y));
    }
    return model;
}

namespace detail {

inline void gbt_node_to_json(const GbtTree& tree, int idx, nlohmann::json& j) {
    const GbtNode& n = tree[static_cast<std::size_t>(idx)];
    if (n.feature < 0) {
        j["weight"] = n.weight;
        return;
    }
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    gbt_node_to_json(tree, n.left, j["left"]);
    gbt_node_to_json(tree, n.right, j["right"]);
}

inline int gbt_node_from_json(const nlohmann::json& j, GbtTree& tree) {
    const int idx = static_cast<int>(tree.size());
    tree.push_back({});
    if (j.contains("feature")) {
        const int feature = j.at("feature").get<int>();
        const double threshold = j.at("threshold").get<double>();
        const int l = gbt_node_from_json(j.at("left"), tree);
        const int r = gbt_node_from_json(j.at("right"), tree);
        GbtNode& n = tree[static_cast<std::size_t>(idx)];
        n.feature = feature;
        n.threshold = threshold;
        n.left = l;
        n.right = r;
    } else {
        tree[static_cast<std::size_t>(idx)].weight = j.at("weight").get<double>();
    }
    return idx;
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const GbtConfig& c) {
    j = nlohmann::json{{"rounds", c.rounds},
                       {"learning_rate", c.learning_rate},
                       {"max_depth", c.max_depth},
                       {"min_child_weight", c.min_child_weight},
                       {"lambda_l2", c.lambda_l2},
                       {"gamma_split", c.gamma_split},
                       {"subsample", c.subsample},
                       {"colsample", c.colsample},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GbtConfig& c) {
    j.at("rounds").get_to(c.rounds);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("max_depth").get_to(c.max_depth);
    j.at("min_child_weight").get_to(c.min_child_weight);
    j.at("lambda_l2").get_to(c.lambda_l2);
    j.at("gamma_split").get_to(c.gamma_split);
    j.at("subsample").get_to(c.subsample);
    j.at("colsample").get_to(c.colsample);
    j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const GbtModel& m) {
    j = nlohmann::json{{"base", m.base},
                       {"n_features", m.n_features},
                       {"config", m.config},
                       {"loss_curve", m.loss_curve}};
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json node;
        detail::gbt_node_to_json(t, 0, node);
        trees.push_back(std::move(node));
    }
    j["trees"] = std::move(trees);
}

inline void from_json(const nlohmann::json& j, GbtModel& m) {
    j.at("base").get_to(m.base);
    j.at("n_features").get_to(m.n_features);
    j.at("config").get_to(m.config);
    j.at("loss_curve").get_to(m.loss_curve);
    m.trees.clear();
    for (const auto& node : j.at("trees")) {
        GbtTree t;
        detail::gbt_node_from_json(node, t);
        m.trees.push_back(std::move(t));
    }
}

/// Candidate values per hyperparameter; the defaults span 108 combinations.
struct GbtSpace {
    std::vector<int> rounds = {100, 200, 400};
    std::vector<double> learning_rate = {0.03, 0.1, 0.3};
    std::vector<int> max_depth = {2, 3, 4, 6};
    std::vector<double> min_child_weight = {1.0};
    std::vector<double> lambda_l2 = {1.0};
    std::vector<double> gamma_split = {0.0};
    std::vector<double> subsample = {1.0, 0.9, 0.8};
    std::vector<double> colsample = {1.0};
};

namespace detail {

template <typename T>
const T& pick_one(const std::vector<T>& values, Rng& rng, const char* what) {
    if (values.empty()) throw UsageError(std::string("tune_gbt: empty candidate list for ") + what);
    return values[rng.uniform_int(values.size())];
}

}  // namespace detail

inline GbtConfig sample_gbt_config(const GbtSpace& space, Rng& rng) {
    GbtConfig c;
    c.rounds = detail::pick_one(space.rounds, rng, "rounds");
    c.learning_rate = detail::pick_one(space.learning_rate, rng, "learning_rate");
    c.max_depth = detail::pick_one(space.max_depth, rng, "max_depth");
    c.min_child_weight = detail::pick_one(space.min_child_weight, rng, "min_child_weight");
    c.lambda_l2 = detail::pick_one(space.lambda_l2, rng, "lambda_l2");
    c.gamma_split = detail::pick_one(space.gamma_split, rng, "gamma_split");
    c.subsample = detail::pick_one(space.subsample, rng, "subsample");
    c.colsample = detail::pick_one(space.colsample, rng, "colsample");
    return c;
}

struct GbtTrial {
    GbtConfig config;
    double score = 0.0;
};

struct GbtTuneResult {
    GbtConfig best;
    int best_index = -1;
    std::vector<GbtTrial> trials;

    std::string trace_csv() const {
        std::ostringstream out;
        out << "trial,rounds,learning_rate,max_depth,min_child_weight,lambda_l2,gamma_split,"
               "subsample,colsample,seed,score\n";
        for (std::size_t i = 0; i < trials.size(); ++i) {
            const GbtConfig& c = trials[i].config;
            out << i << ',' << c.rounds << ',' << csv::fmt_double(c.learning_rate) << ','
                << c.max_depth << ',' << csv::fmt_double(c.min_child_weight) << ','
                << csv::fmt_double(c.lambda_l2) << ',' << csv::fmt_double(c.gamma_split) << ','
                << csv::fmt_double(c.subsample) << ',' << csv::fmt_double(c.colsample) << ','
                << c.seed << ',' << csv::fmt_double(trials[i].score) << '\n';
        }
        return out.str();
    }
};

/// Seeded random search: draws exactly `budget` configs, scores each by mean
/// validation error over the folds, and keeps the earliest best scorer.
inline GbtTuneResult tune_gbt(const std::vector<std::vector<double>>& X,
                              const std::vector<double>& y, const GbtSpace& space,
                              const std::vector<TimeSlice>& splits, int budget,
                              std::uint64_t seed) {
    if (budget < 1) throw UsageError("tune_gbt: budget must be >= 1");
    if (splits.empty()) throw UsageError("tune_gbt: no validation folds");
    for (const auto& s : splits)
        if (s.val_end > static_cast<int>(y.size()))
            throw UsageError("tune_gbt: fold extends past the data");

    GbtTuneResult out;
    double best_score = std::numeric_limits<double>::infinity();
    for (int i = 0; i < budget; ++i) {
        Rng rng(derive_seed(seed, "gbt-trial", static_cast<std::uint64_t>(i)));
        GbtConfig cfg = sample_gbt_config(space, rng);
        cfg.seed = derive_seed(seed, "gbt-config", static_cast<std::uint64_t>(i));

        std::vector<double> fold_scores;
        for (const auto& s : splits) {
            const std::vector<std::vector<double>> Xtr(X.begin() + s.train_begin,
                                                       X.begin() + s.train_end);
            const std::vector<double> ytr(y.begin() + s.train_begin, y.begin() + s.train_end);
            const std::vector<std::vector<double>> Xval(X.begin() + s.val_begin,
                                                        X.begin() + s.val_end);
            const std::vector<double> yval(y.begin() + s.val_begin, y.begin() + s.val_end);
            const GbtModel m = fit_gbt(Xtr, ytr, cfg);
            fold_scores.push_back(detail::safe_mape(yval, m.predict(Xval)));
        }
        const double score =
            stable_sum(std::move(fold_scores)) / static_cast<double>(splits.size());
        out.trials.push_back({cfg, score});
        if (score < best_score) {
            best_score = score;
            out.best = cfg;
            out.best_index = i;
        }
    }
    return out;
}

}  // namespace evcast
