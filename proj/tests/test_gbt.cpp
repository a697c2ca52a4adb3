#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "evcast/gbt.hpp"
#include "evcast/rng.hpp"

using namespace evcast;

namespace {

std::vector<std::vector<double>> step_inputs(int n) {
    std::vector<std::vector<double>> X;
    for (int i = 0; i < n; ++i) X.push_back({static_cast<double>(i - n / 2)});
    return X;
}

std::vector<double> step_targets(const std::vector<std::vector<double>>& X) {
    std::vector<double> y;
    for (const auto& x : X) y.push_back(x[0] > 0.0 ? 1.0 : 0.0);
    return y;
}

}  // namespace

TEST_CASE("config violations are rejected before training", "[gbt]") {
    const auto X = step_inputs(30);
    const auto y = step_targets(X);
    GbtConfig c;
    c.rounds = 0;
    CHECK_THROWS_AS(fit_gbt(X, y, c), UsageError);
    c = {};
    c.subsample = 0.0;
    CHECK_THROWS_AS(fit_gbt(X, y, c), UsageError);
    c = {};
    c.colsample = 1.5;
    CHECK_THROWS_AS(fit_gbt(X, y, c), UsageError);
    c = {};
    CHECK_THROWS_AS(fit_gbt(step_inputs(10), step_targets(step_inputs(10)), c), DataError);
}

TEST_CASE("constant target is reproduced after one round", "[gbt]") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    Rng r(5);
    for (int i = 0; i < 30; ++i) {
        X.push_back({r.uniform01(), r.uniform01()});
        y.push_back(5.0);
    }
    GbtConfig c;
    c.rounds = 1;
    const auto m = fit_gbt(X, y, c);
    for (double p : m.predict(X)) CHECK(p == 5.0);
    CHECK(m.loss_curve.back() == 0.0);
}

TEST_CASE("single-leaf round matches the closed-form leaf weight", "[gbt]") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    Rng r(6);
    for (int i = 0; i < 25; ++i) {
        X.push_back({r.uniform01()});
        y.push_back(r.uniform(1.0, 9.0));
    }
    const double total = stable_sum(y);

    GbtConfig c;
    c.rounds = 1;
    c.learning_rate = 0.25;
    c.lambda_l2 = 0.0;
    c.gamma_split = 1e9;
    const auto m = fit_gbt(X, y, c, 0.0);
    const double want = 0.25 * total / 25.0;
    for (double p : m.predict(X)) CHECK(p == Catch::Approx(want).margin(1e-12));

    c.lambda_l2 = 370.0;
    const auto m2 = fit_gbt(X, y, c, 0.0);
    const double want2 = 0.25 * total / (25.0 + 370.0);
    for (double p : m2.predict(X)) CHECK(p == Catch::Approx(want2).margin(1e-12));
}

TEST_CASE("one unshrunk split fits a step function exactly", "[gbt]") {
    const auto X = step_inputs(100);
    const auto y = step_targets(X);
    GbtConfig c;
    c.rounds = 1;
    c.learning_rate = 1.0;
    c.max_depth = 1;
    c.lambda_l2 = 0.0;
    const auto m = fit_gbt(X, y, c);
    CHECK(m.loss_curve.back() <= 1e-24);
}

TEST_CASE("step function reaches tight mse with shrinkage", "[gbt]") {
    const auto X = step_inputs(100);
    const auto y = step_targets(X);
    GbtConfig c;
    c.rounds = 200;
    c.learning_rate = 0.3;
    c.max_depth = 2;
    const auto m = fit_gbt(X, y, c);
    CHECK(m.loss_curve.back() <= 1e-3);
    for (std::size_t i = 1; i < m.loss_curve.size(); ++i)
        CHECK(m.loss_curve[i] <= m.loss_curve[i - 1] + 1e-12);
}

TEST_CASE("training loss never increases on noisy data", "[gbt]") {
    Rng r(7);
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 80; ++i) {
        X.push_back({r.uniform(-3, 3), r.uniform(-3, 3), r.uniform(-3, 3)});
        y.push_back(std::sin(X.back()[0]) + 0.5 * X.back()[1] + r.normal(0.0, 0.3));
    }
    GbtConfig c;
    c.rounds = 200;
    c.learning_rate = 0.1;
    c.max_depth = 4;
    const auto m = fit_gbt(X, y, c);
    REQUIRE(m.loss_curve.size() == 201);
    for (std::size_t i = 1; i < m.loss_curve.size(); ++i)
        CHECK(m.loss_curve[i] <= m.loss_curve[i - 1] + 1e-12);
}

TEST_CASE("row permutation leaves the fit bit-identical", "[gbt]") {
    Rng r(8);
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 40; ++i) {
        X.push_back({r.uniform(-2, 2), r.uniform(-2, 2), r.uniform(-2, 2)});
        y.push_back(r.uniform(-5, 5));
    }
    std::vector<int> perm(40);
    for (int i = 0; i < 40; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng pr(9);
    pr.shuffle(perm);
    std::vector<std::vector<double>> Xp;
    std::vector<double> yp;
    for (int i : perm) {
        Xp.push_back(X[static_cast<std::size_t>(i)]);
        yp.push_back(y[static_cast<std::size_t>(i)]);
    }

    GbtConfig c;
    c.rounds = 25;
    c.learning_rate = 0.2;
    c.max_depth = 3;
    c.colsample = 0.6;
    c.seed = 99;
    const auto a = fit_gbt(X, y, c);
    const auto b = fit_gbt(Xp, yp, c);

    Rng probe(10);
    for (int i = 0; i < 12; ++i) {
        const std::vector<double> x = {probe.uniform(-2, 2), probe.uniform(-2, 2),
                                       probe.uniform(-2, 2)};
        CHECK(a.predict_row(x) == b.predict_row(x));
    }
    REQUIRE(a.loss_curve.size() == b.loss_curve.size());
    for (std::size_t i = 0; i < a.loss_curve.size(); ++i)
        CHECK(a.loss_curve[i] == b.loss_curve[i]);
}

TEST_CASE("gbt model survives a json round trip", "[gbt]") {
    Rng r(11);
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 45; ++i) {
        X.push_back({r.uniform(-1, 1), r.uniform(-1, 1)});
        y.push_back(X.back()[0] * X.back()[0] - X.back()[1]);
    }
    GbtConfig c;
    c.rounds = 15;
    c.max_depth = 3;
    const auto m = fit_gbt(X, y, c);

    const nlohmann::json j = m;
    const GbtModel back = j.get<GbtModel>();
    CHECK(back.base == m.base);
    CHECK(back.config == m.config);
    for (const auto& x : X) CHECK(back.predict_row(x) == m.predict_row(x));
}

TEST_CASE("time slices grow by one week and never leak", "[gbt][tuning]") {
    const auto splits = time_slice_splits(28, 14, 7);
    REQUIRE(splits.size() == 2);
    CHECK(splits[0].train_begin == 0);
    CHECK(splits[0].train_end == 14);
    CHECK(splits[0].val_begin == 14);
    CHECK(splits[0].val_end == 21);
    CHECK(splits[1].train_end == 21);
    CHECK(splits[1].val_begin == 21);
    CHECK(splits[1].val_end == 28);

    const auto one = time_slice_splits(21, 14, 7);
    CHECK(one.size() == 1);

    for (const auto& s : time_slice_splits(100, 30, 10, 7)) {
        CHECK(s.train_end == s.val_begin);
        CHECK(s.val_end <= 100);
        CHECK(s.train_begin == 0);
    }

    CHECK_THROWS_AS(time_slice_splits(20, 14, 7), DataError);
    CHECK_THROWS_AS(time_slice_splits(28, 0, 7), UsageError);
}

TEST_CASE("tuning with one candidate returns it and ties keep the first trial", "[gbt][tuning]") {
    Rng r(12);
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 40; ++i) {
        X.push_back({static_cast<double>(i)});
        y.push_back(2.0 + 0.1 * static_cast<double>(i) + r.normal(0.0, 0.1));
    }
    GbtSpace space;
    space.rounds = {20};
    space.learning_rate = {0.1};
    space.max_depth = {2};
    space.subsample = {1.0};
    const auto splits = time_slice_splits(40, 26, 7);

    const auto single = tune_gbt(X, y, space, splits, 1, 42);
    CHECK(single.best_index == 0);
    CHECK(single.trials.size() == 1);
    CHECK(single.best.rounds == 20);

    const auto tied = tune_gbt(X, y, space, splits, 5, 42);
    CHECK(tied.best_index == 0);
    for (const auto& t : tied.trials) CHECK(t.score == tied.trials[0].score);
}

TEST_CASE("tuning finds the planted interpolating config", "[gbt][tuning]") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 40; ++i) {
        const double x = static_cast<double>(i) / 40.0;
        X.push_back({x});
        y.push_back(2.0 + (x > 0.5 ? 1.0 : 0.0));
    }
    GbtSpace space;
    space.rounds = {2, 200};
    space.learning_rate = {0.1};
    space.max_depth = {1};
    space.lambda_l2 = {0.0};
    space.subsample = {1.0};
    const auto splits = time_slice_splits(40, 26, 7);
    const auto res = tune_gbt(X, y, space, splits, 16, 7);
    CHECK(res.best.rounds == 200);
    CHECK(res.trials[static_cast<std::size_t>(res.best_index)].score <= 0.01);
}

TEST_CASE("tuning trace is reproducible for a fixed seed", "[gbt][tuning]") {
    Rng r(13);
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 40; ++i) {
        X.push_back({r.uniform01(), r.uniform01()});
        y.push_back(1.0 + X.back()[0] + r.normal(0.0, 0.2));
    }
    GbtSpace space;
    space.rounds = {10, 30};
    space.learning_rate = {0.1, 0.3};
    space.max_depth = {2, 3};
    space.subsample = {1.0, 0.8};
    const auto splits = time_slice_splits(40, 26, 7);

    const auto a = tune_gbt(X, y, space, splits, 8, 314);
    const auto b = tune_gbt(X, y, space, splits, 8, 314);
    CHECK(a.trace_csv() == b.trace_csv());
    CHECK(a.best == b.best);
    CHECK(a.best_index == b.best_index);

    const auto other = tune_gbt(X, y, space, splits, 8, 315);
    CHECK(other.trace_csv() != a.trace_csv());
}
