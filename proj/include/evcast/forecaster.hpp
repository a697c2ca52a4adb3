#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "evcast/arima.hpp"
#include "evcast/errors.hpp"
#include "evcast/features.hpp"
#include "evcast/gbt.hpp"
#include "evcast/lstm.hpp"
#include "evcast/regression.hpp"
#include "evcast/rng.hpp"
#include "evcast/tuning.hpp"

namespace evcast {

enum class ModelFamily { Regression, RegArima, Gbt, Lstm };

inline const char* family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::Regression: return "regression";
        case ModelFamily::RegArima: return "reg_arima";
        case ModelFamily::Gbt: return "gbt";
        case ModelFamily::Lstm: return "lstm";
    }
    return "regression";
}

inline ModelFamily family_from_name(const std::string& name) {
    if (name == "regression") return ModelFamily::Regression;
    if (name == "reg_arima") return ModelFamily::RegArima;
    if (name == "gbt") return ModelFamily::Gbt;
    if (name == "lstm") return ModelFamily::Lstm;
    throw UsageError("unknown model family '" + name + "'");
}

/// Knobs shared by every family fit. Tuning folds are expanding windows wholly
/// inside the training rows: the first fold trains on everything except the
/// last cv_max_folds validation windows, and at most cv_max_folds folds run.
struct FitOptions {
    ArimaOptions arima;
    GbtSpace gbt_space;
    int gbt_budget = 108;
    LstmSpace lstm_space;
    int lstm_budget = 10;
    int cv_val_len = 28;
    int cv_step = 7;
    int cv_min_train = 28;
    int cv_max_folds = 3;
    int lstm_patience = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<TimeSlice> tuning_folds(int n, const FitOptions& opt) {
    const int initial = std::max(
        opt.cv_min_train, n - opt.cv_val_len - (opt.cv_max_folds - 1) * opt.cv_step);
    auto folds = time_slice_splits(n, initial, opt.cv_val_len, opt.cv_step);
    while (static_cast<int>(folds.size()) > opt.cv_max_folds)
        folds.erase(folds.begin());
    return folds;
}

}  // namespace detail

/// One fitted scenario-to-target model. Only the active family's payload is
/// populated. The reg-arima payload keeps its training residuals because the
/// error-model forecast continues from where training ended; the LSTM payload
/// keeps the encoded training rows so prediction windows can reach back
/// across the train/test boundary.
struct TrainedForecaster {
    ModelFamily family = ModelFamily::Regression;
    FeatureDescriptor descriptor;
    LinearModel linear;
    RegArimaModel reg_arima;
    std::vector<double> reg_arima_residuals;
    GbtModel gbt;
    LstmModel lstm;
    Scaler target_scaler{0.0, 1.0};
    std::vector<std::vector<double>> lstm_context;
    std::string tuning_trace;

    std::vector<double> predict(const ScenarioFrame& frame) const {
        const auto Xf = encode_features(descriptor, frame);
        switch (family) {
            case ModelFamily::Regression:
                return forecast_linear(linear, Xf);
            case ModelFamily::RegArima:
                return forecast_reg_arima(reg_arima, Xf, reg_arima_residuals);
            case ModelFamily::Gbt:
                return gbt.predict(Xf);
            case ModelFamily::Lstm: {
                if (Xf.empty()) return {};
                std::vector<std::vector<double>> rows = lstm_context;
                rows.insert(rows.end(), Xf.begin(), Xf.end());
                const int from = static_cast<int>(lstm_context.size());
                const auto scaled =
                    lstm_predict_range(lstm, rows, from, from + static_cast<int>(Xf.size()));
                return target_scaler.invert(scaled);
            }
        }
        return {};
    }
};

/// Fits the requested family on the frame's encoded features against y.
/// GBT and LSTM run their seeded random search over folds inside the
/// training rows before the final fit on all of them.
inline TrainedForecaster fit_forecaster(const ScenarioFrame& train_frame,
                                        const std::vector<double>& y,
                                        const std::vector<std::string>& extra, ModelFamily family,
                                        const FitOptions& opt) {
    if (train_frame.size() != y.size())
        throw DataError("fit_forecaster: frame and target length mismatch");
    if (y.empty()) throw DataError("fit_forecaster: empty training data");

    TrainedForecaster tf;
    tf.family = family;
    tf.descriptor = fit_feature_descriptor(train_frame, extra);
    const auto X = encode_features(tf.descriptor, train_frame);
    const int n = static_cast<int>(y.size());

    switch (family) {
        case ModelFamily::Regression:
            tf.linear = fit_ts_regression(X, y);
            break;
        case ModelFamily::RegArima:
            tf.reg_arima = fit_reg_arima(X, y, opt.arima);
            tf.reg_arima_residuals = residuals_of(tf.reg_arima.reg, X, y);
            break;
        case ModelFamily::Gbt: {
            const auto folds = detail::tuning_folds(n, opt);
            const auto tuned = tune_gbt(X, y, opt.gbt_space, folds, opt.gbt_budget,
                                        derive_seed(opt.seed, "tune-gbt"));
            tf.tuning_trace = tuned.trace_csv();
            tf.gbt = fit_gbt(X, y, tuned.best);
            break;
        }
        case ModelFamily::Lstm: {
            const auto folds = detail::tuning_folds(n, opt);
            const auto tuned = tune_lstm(X, y, opt.lstm_space, folds, opt.lstm_budget,
                                         derive_seed(opt.seed, "tune-lstm"));
            tf.tuning_trace = tuned.trace_csv();
            tf.target_scaler = detail::fit_target_scaler(y, n);
            const auto ys = tf.target_scaler.apply(y);
            tf.lstm = fit_lstm(X, ys, tuned.best, opt.lstm_patience);
            tf.lstm_context = X;
            break;
        }
    }
    return tf;
}

inline void to_json(nlohmann::json& j, const Scaler& s) {
    j = nlohmann::json{{"lo", s.lo}, {"hi", s.hi}};
}

inline void from_json(const nlohmann::json& j, Scaler& s) {
    j.at("lo").get_to(s.lo);
    j.at("hi").get_to(s.hi);
}

inline void to_json(nlohmann::json& j, const FeatureDescriptor& d) {
    j = nlohmann::json{{"owners_scaler", d.owners_scaler}, {"extra", d.extra}};
    nlohmann::json scalers = nlohmann::json::object();
    for (const auto& [name, s] : d.extra_scalers) scalers[name] = s;
    j["extra_scalers"] = std::move(scalers);
}

inline void from_json(const nlohmann::json& j, FeatureDescriptor& d) {
    j.at("owners_scaler").get_to(d.owners_scaler);
    j.at("extra").get_to(d.extra);
    d.extra_scalers.clear();
    for (const auto& [name, s] : j.at("extra_scalers").items())
        d.extra_scalers[name] = s.get<Scaler>();
}

inline void to_json(nlohmann::json& j, const LinearModel& m) {
    std::vector<double> beta(m.beta.data(), m.beta.data() + m.beta.size());
    j = nlohmann::json{{"beta", std::move(beta)}};
}

inline void from_json(const nlohmann::json& j, LinearModel& m) {
    const auto beta = j.at("beta").get<std::vector<double>>();
    m.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
}

inline void to_json(nlohmann::json& j, const ArimaModel& m) {
    j = nlohmann::json{{"p", m.p},           {"d", m.d},
                       {"q", m.q},           {"include_mean", m.include_mean},
                       {"mu", m.mu},         {"phi", m.phi},
                       {"theta", m.theta},   {"sigma2", m.sigma2},
                       {"loglik", m.loglik}, {"aicc", m.aicc}};
}

inline void from_json(const nlohmann::json& j, ArimaModel& m) {
    j.at("p").get_to(m.p);
    j.at("d").get_to(m.d);
    j.at("q").get_to(m.q);
    j.at("include_mean").get_to(m.include_mean);
    j.at("mu").get_to(m.mu);
    j.at("phi").get_to(m.phi);
    j.at("theta").get_to(m.theta);
    j.at("sigma2").get_to(m.sigma2);
    j.at("loglik").get_to(m.loglik);
    j.at("aicc").get_to(m.aicc);
}

inline void to_json(nlohmann::json& j, const RegArimaModel& m) {
    j = nlohmann::json{{"reg", m.reg}, {"arima", m.arima}};
}

inline void from_json(const nlohmann::json& j, RegArimaModel& m) {
    j.at("reg").get_to(m.reg);
    j.at("arima").get_to(m.arima);
}

inline void to_json(nlohmann::json& j, const TrainedForecaster& tf) {
    j = nlohmann::json{{"family", family_name(tf.family)},
                       {"descriptor", tf.descriptor},
                       {"target_scaler", tf.target_scaler},
                       {"tuning_trace", tf.tuning_trace}};
    switch (tf.family) {
        case ModelFamily::Regression:
            j["linear"] = tf.linear;
            break;
        case ModelFamily::RegArima:
            j["reg_arima"] = tf.reg_arima;
            j["reg_arima_residuals"] = tf.reg_arima_residuals;
            break;
        case ModelFamily::Gbt:
            j["gbt"] = tf.gbt;
            break;
        case ModelFamily::Lstm:
            j["lstm"] = tf.lstm;
            j["lstm_context"] = tf.lstm_context;
            break;
    }
}

inline void from_json(const nlohmann::json& j, TrainedForecaster& tf) {
    tf = {};
    tf.family = family_from_name(j.at("family").get<std::string>());
    j.at("descriptor").get_to(tf.descriptor);
    j.at("target_scaler").get_to(tf.target_scaler);
    j.at("tuning_trace").get_to(tf.tuning_trace);
    switch (tf.family) {
        case ModelFamily::Regression:
            j.at("linear").get_to(tf.linear);
            break;
        case ModelFamily::RegArima:
            j.at("reg_arima").get_to(tf.reg_arima);
            j.at("reg_arima_residuals").get_to(tf.reg_arima_residuals);
            break;
        case ModelFamily::Gbt:
            j.at("gbt").get_to(tf.gbt);
            break;
        case ModelFamily::Lstm:
            j.at("lstm").get_to(tf.lstm);
            j.at("lstm_context").get_to(tf.lstm_context);
            break;
    }
}

}  // namespace evcast
