#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clustering.hpp"
#include "errors.hpp"
#include "impact.hpp"
#include "pipeline.hpp"
#include "preprocess.hpp"
#include "series.hpp"
#include "synth.hpp"
#include "transactions.hpp"

namespace evcast {

inline constexpr const char* kToolVersion = "0.1.0";

namespace cli {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("missing input: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Artifacts land under their final name only after the full write succeeds.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline nlohmann::json parse_config_file(const std::string& path) {
    const std::string text = read_file(path);
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw UsageError("config: invalid JSON in " + path);
    if (!j.is_object()) throw UsageError("config: top level must be an object");
    return j;
}

template <typename T>
T json_get(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw UsageError("config: bad value for '" + key + "'");
    }
}

// Everything one command invocation needs: merged flags, the parsed config
// file, and the output directory.
struct RunContext {
    std::filesystem::path out = ".";
    std::optional<std::uint64_t> seed;
    int threads = 1;
    nlohmann::json config = nlohmann::json::object();

    nlohmann::json block(const std::string& command) const {
        if (!config.contains(command)) return nlohmann::json::object();
        if (!config.at(command).is_object())
            throw UsageError("config: block '" + command + "' must be an object");
        return config.at(command);
    }

    std::uint64_t require_seed(const std::string& command) const {
        if (seed) return *seed;
        const nlohmann::json b = block(command);
        if (b.contains("seed")) return json_get<std::uint64_t>(b, "seed", 0);
        if (config.contains("seed")) return json_get<std::uint64_t>(config, "seed", 0);
        throw UsageError(command + ": stochastic command requires --seed or a config seed");
    }

    std::optional<std::uint64_t> optional_seed(const std::string& command) const {
        if (seed) return seed;
        const nlohmann::json b = block(command);
        if (b.contains("seed")) return json_get<std::uint64_t>(b, "seed", 0);
        if (config.contains("seed")) return json_get<std::uint64_t>(config, "seed", 0);
        return std::nullopt;
    }
};

class ManifestBuilder {
  public:
    ManifestBuilder(const RunContext& ctx, std::string command)
        : ctx_(ctx), command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

    void input(const std::filesystem::path& p) {
        inputs_.push_back(std::filesystem::absolute(p).lexically_normal().string());
    }
    void param(const std::string& key, nlohmann::json value) { params_[key] = std::move(value); }

    void artifact(const std::string& name, const std::string& content) {
        write_file_atomic(ctx_.out / name, content);
        outputs_.push_back(name);
    }

    void finish(std::optional<std::uint64_t> seed) {
        const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start_)
                              .count();
        std::sort(inputs_.begin(), inputs_.end());
        std::sort(outputs_.begin(), outputs_.end());
        nlohmann::json m{{"command", command_},
                         {"inputs", inputs_},
                         {"outputs", outputs_},
                         {"params", params_},
                         {"threads", ctx_.threads},
                         {"versions", {{"evcast", kToolVersion}}},
                         {"wall_ms", wall}};
        if (seed) m["seed"] = *seed;
        write_file_atomic(ctx_.out / ("manifest_" + command_ + ".json"), m.dump(2) + "\n");
    }

  private:
    const RunContext& ctx_;
    std::string command_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
    nlohmann::json params_ = nlohmann::json::object();
};

inline Season parse_season(const std::string& name) {
    for (int i = 0; i < 4; ++i)
        if (name == kSeasonNames[i]) return static_cast<Season>(i);
    throw UsageError("unknown season '" + name + "'");
}

inline std::vector<ModelFamily> parse_families(const std::string& csv_list) {
    std::vector<ModelFamily> out;
    std::istringstream in(csv_list);
    std::string token;
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        out.push_back(family_from_name(token));
    }
    if (out.empty()) throw UsageError("no model families requested");
    return out;
}

// Cluster ids ride in the series file name (series_c2.csv); a bare name
// falls back to the 1-based position in the input list.
inline int cluster_from_filename(const std::filesystem::path& p, int fallback) {
    const std::string stem = p.stem().string();
    const auto pos = stem.rfind("_c");
    if (pos == std::string::npos) return fallback;
    int value = 0;
    for (std::size_t i = pos + 2; i < stem.size(); ++i) {
        if (stem[i] < '0' || stem[i] > '9') return fallback;
        value = value * 10 + (stem[i] - '0');
    }
    return value > 0 ? value : fallback;
}

inline FitOptions fit_options_from(const nlohmann::json& b) {
    FitOptions opt;
    opt.gbt_budget = json_get<int>(b, "gbt_budget", opt.gbt_budget);
    opt.lstm_budget = json_get<int>(b, "lstm_budget", opt.lstm_budget);
    opt.lstm_patience = json_get<int>(b, "lstm_patience", opt.lstm_patience);
    opt.cv_val_len = json_get<int>(b, "cv_val_len", opt.cv_val_len);
    opt.cv_step = json_get<int>(b, "cv_step", opt.cv_step);
    opt.cv_min_train = json_get<int>(b, "cv_min_train", opt.cv_min_train);
    opt.cv_max_folds = json_get<int>(b, "cv_max_folds", opt.cv_max_folds);
    opt.arima.max_p = json_get<int>(b, "arima_max_p", opt.arima.max_p);
    opt.arima.max_q = json_get<int>(b, "arima_max_q", opt.arima.max_q);
    opt.arima.max_d = json_get<int>(b, "arima_max_d", opt.arima.max_d);
    // Search-space bounds so operators can cap the compute of a run.
    opt.lstm_space.units_min = json_get<int>(b, "lstm_units_min", opt.lstm_space.units_min);
    opt.lstm_space.units_max = json_get<int>(b, "lstm_units_max", opt.lstm_space.units_max);
    if (b.contains("lstm_epochs")) opt.lstm_space.epochs = {json_get<int>(b, "lstm_epochs", 60)};
    if (b.contains("lstm_window")) opt.lstm_space.window = {json_get<int>(b, "lstm_window", 7)};
    if (b.contains("lstm_depth")) opt.lstm_space.depth = {json_get<int>(b, "lstm_depth", 1)};
    if (b.contains("lstm_bidirectional"))
        opt.lstm_space.bidirectional = {json_get<int>(b, "lstm_bidirectional", 0)};
    return opt;
}

inline nlohmann::json fit_options_json(const FitOptions& opt) {
    return nlohmann::json{{"gbt_budget", opt.gbt_budget},
                          {"lstm_budget", opt.lstm_budget},
                          {"lstm_patience", opt.lstm_patience},
                          {"cv_val_len", opt.cv_val_len},
                          {"cv_step", opt.cv_step},
                          {"cv_min_train", opt.cv_min_train},
                          {"cv_max_folds", opt.cv_max_folds},
                          {"arima_max_p", opt.arima.max_p},
                          {"arima_max_q", opt.arima.max_q},
                          {"arima_max_d", opt.arima.max_d},
                          {"lstm_units_min", opt.lstm_space.units_min},
                          {"lstm_units_max", opt.lstm_space.units_max},
                          {"lstm_epochs", opt.lstm_space.epochs},
                          {"lstm_window", opt.lstm_space.window},
                          {"lstm_depth", opt.lstm_space.depth},
                          {"lstm_bidirectional", opt.lstm_space.bidirectional}};
}

struct CommandFlags {
    std::string input;
    std::vector<std::string> inputs;
    std::string model;
    std::string scenario;
    std::string family;
    std::string feature_set;
    std::string families;
    std::string provider;
    std::string season;
    int cluster = 0;
    int horizon = 0;
    int k_max = 0;
    int feeder = 0;
};

inline std::string resolve_input(const std::string& flag_value, const nlohmann::json& b,
                                 const std::string& key, const std::string& command) {
    if (!flag_value.empty()) return flag_value;
    const std::string from_config = json_get<std::string>(b, key, "");
    if (!from_config.empty()) return from_config;
    throw UsageError(command + ": missing required input '" + key + "'");
}

inline int cmd_synth(const RunContext& ctx, const CommandFlags& flags) {
    const nlohmann::json b = ctx.block("synth");
    const std::uint64_t root = ctx.require_seed("synth");
    ManifestBuilder manifest(ctx, "synth");

    SynthConfig cfg = default_synth_config();
    cfg.horizon_days = flags.horizon > 0 ? flags.horizon
                                         : json_get<int>(b, "horizon_days", cfg.horizon_days);
    const std::string start = json_get<std::string>(b, "start_date", "");
    if (!start.empty()) {
        const auto d = parse_date(start);
        if (!d) throw UsageError("synth: bad start_date '" + start + "'");
        cfg.start_date = *d;
    }
    const std::string arrival = json_get<std::string>(b, "arrival", "linear");
    if (arrival == "linear") cfg.arrival = ArrivalSchedule::Linear;
    else if (arrival == "step") cfg.arrival = ArrivalSchedule::Step;
    else throw UsageError("synth: arrival must be 'linear' or 'step'");
    cfg.peak_plug_share = json_get<double>(b, "peak_plug_share", cfg.peak_plug_share);
    cfg.noise_cv = json_get<double>(b, "noise_cv", cfg.noise_cv);
    if (b.contains("owners")) {
        if (!b.at("owners").is_object()) throw UsageError("synth: 'owners' must be an object");
        for (const auto& item : b.at("owners").items()) {
            const int cluster = std::atoi(item.key().c_str());
            auto it = cfg.clusters.find(cluster);
            if (it == cfg.clusters.end())
                throw UsageError("synth: unknown cluster '" + item.key() + "' in owners");
            it->second.owners_final = json_get<int>(b.at("owners"), item.key(), 0);
        }
    }
    cfg.seed = derive_seed(root, "synth");
    validate_synth_config(cfg);

    const std::vector<ChargingTransaction> txns = generate_trial(cfg);
    std::ostringstream out;
    write_transactions(out, txns);
    manifest.artifact("transactions.csv", out.str());

    manifest.param("horizon_days", cfg.horizon_days);
    manifest.param("start_date", format_date(cfg.start_date));
    manifest.param("arrival", arrival);
    manifest.param("peak_plug_share", cfg.peak_plug_share);
    manifest.param("noise_cv", cfg.noise_cv);
    manifest.param("transactions", txns.size());
    manifest.finish(root);
    return 0;
}

inline int cmd_ingest(const RunContext& ctx, const CommandFlags& flags) {
    const nlohmann::json b = ctx.block("ingest");
    const std::string input = resolve_input(flags.input, b, "input", "ingest");
    ManifestBuilder manifest(ctx, "ingest");
    manifest.input(input);

    std::istringstream in(read_file(input));
    ParseResult parsed = parse_transactions(in);
    const std::size_t raw = parsed.records.size();
    std::vector<ChargingTransaction> cleaned = clean_trial_data(std::move(parsed.records));

    std::ostringstream out;
    write_transactions(out, cleaned);
    manifest.artifact("transactions_clean.csv", out.str());
    manifest.artifact("rejects.jsonl", parsed.rejects.to_jsonl());

    manifest.param("rows_parsed", raw);
    manifest.param("rows_clean", cleaned.size());
    manifest.param("rows_rejected", parsed.rejects.rejects.size());
    manifest.finish(ctx.optional_seed("ingest"));
    return 0;
}

inline std::string cluster_summary_csv(const ClusterModel& model,
                                       const std::vector<OwnerSummary>& owners) {
    struct Acc {
        long owners = 0;
        double kwh_weighted = 0.0;
        long transactions = 0;
        long active_days = 0;
    };
    std::map<int, Acc> by_cluster;
    for (const auto& o : owners) {
        Acc& a = by_cluster[model.cluster_of(o.participant_id)];
        a.owners += 1;
        a.kwh_weighted += o.mean_kwh_per_charge * static_cast<double>(o.n_transactions);
        a.transactions += o.n_transactions;
        a.active_days += o.active_days;
    }
    std::ostringstream os;
    csv::write_row(os, {"cluster", "owners", "battery_kwh_min", "battery_kwh_max",
                        "mean_kwh_per_charge", "charges_per_day"});
    for (const auto& [cluster, a] : by_cluster) {
        const auto& band = model.capacity_bands.at(static_cast<std::size_t>(cluster - 1));
        const double mean_kwh =
            a.transactions > 0 ? a.kwh_weighted / static_cast<double>(a.transactions) : 0.0;
        const double rate =
            a.active_days > 0 ? static_cast<double>(a.transactions) / static_cast<double>(a.active_days)
                              : 0.0;
        csv::write_row(os, {std::to_string(cluster), std::to_string(a.owners),
                            csv::fmt_double(band.first), csv::fmt_double(band.second),
                            csv::fmt_double(mean_kwh), csv::fmt_double(rate)});
    }
    return os.str();
}

inline int cmd_cluster(const RunContext& ctx, const CommandFlags& flags) {
    const nlohmann::json b = ctx.block("cluster");
    const std::string input = resolve_input(flags.input, b, "input", "cluster");
    const std::uint64_t root = ctx.require_seed("cluster");
    const int k_max = flags.k_max > 0 ? flags.k_max : json_get<int>(b, "k_max", 8);
    const double theta = json_get<double>(b, "theta", 0.10);
    ManifestBuilder manifest(ctx, "cluster");
    manifest.input(input);

    std::istringstream in(read_file(input));
    ParseResult parsed = parse_transactions(in);
    if (!parsed.rejects.rejects.empty())
        throw DataError("cluster: input has " + std::to_string(parsed.rejects.rejects.size()) +
                        " malformed rows; run ingest first");
    const std::vector<OwnerSummary> owners = summarize_owners(parsed.records);
    const ClusterModel model =
        fit_cluster_model(owners, k_max, derive_seed(root, "cluster"), theta);

    manifest.artifact("cluster_model.json", nlohmann::json(model).dump(2) + "\n");
    manifest.artifact("cluster_summary.csv", cluster_summary_csv(model, owners));

    manifest.param("k", model.k);
    manifest.param("k_max", k_max);
    manifest.param("theta", theta);
    manifest.param("owners", owners.size());
    manifest.finish(root);
    return 0;
}

inline int cmd_series(const RunContext& ctx, const CommandFlags& flags) {
    const nlohmann::json b = ctx.block("series");
    const std::string input = resolve_input(flags.input, b, "input", "series");
    const std::string model_path = resolve_input(flags.model, b, "model", "series");
    ManifestBuilder manifest(ctx, "series");
    manifest.input(input);
    manifest.input(model_path);

    std::istringstream in(read_file(input));
    ParseResult parsed = parse_transactions(in);
    if (!parsed.rejects.rejects.empty())
        throw DataError("series: input has " + std::to_string(parsed.rejects.rejects.size()) +
                        " malformed rows; run ingest first");

    nlohmann::json mj = nlohmann::json::parse(read_file(model_path), nullptr, false);
    if (mj.is_discarded()) throw DataError("series: cluster model is not valid JSON");
    ClusterModel model;
    try {
        model = mj.get<ClusterModel>();
    } catch (const nlohmann::json::exception&) {
        throw DataError("series: cluster model JSON has the wrong shape");
    }

    const std::vector<DailyClusterSeries> raw =
        build_daily_series(parsed.records, model.assignments);
    nlohmann::json clean_stats = nlohmann::json::object();
    for (const auto& s : raw) {
        SeriesCleanReport report;
        DailyClusterSeries filled = impute_missing_days(s, &report);
        filled = replace_series_outliers(filled, &report);
        std::ostringstream os;
        write_series_csv(os, filled);
        manifest.artifact("series_c" + std::to_string(s.cluster) + ".csv", os.str());
        std::size_t outliers = 0;
        for (const auto& [col, idx] : report.outliers) outliers += idx.size();
        clean_stats[std::to_string(s.cluster)] = {{"rows", filled.rows.size()},
                                                  {"imputed_days", report.imputed_rows.size()},
                                                  {"outliers_replaced", outliers}};
    }
    manifest.param("clusters", raw.size());
    manifest.param("cleaning", clean_stats);
    manifest.finish(ctx.optional_seed("series"));
    return 0;
}

inline int cmd_evaluate(const RunContext& ctx, const CommandFlags& flags) {
    const nlohmann::json b = ctx.block("evaluate");
    const std::uint64_t root = ctx.require_seed("evaluate");

    std::vector<std::string> inputs = flags.inputs;
    if (inputs.empty())
        inputs = json_get<std::vector<std::string>>(b, "inputs", {});
    if (inputs.empty()) throw UsageError("evaluate: missing required input 'inputs'");

    const std::string family_list =
        !flags.families.empty() ? flags.families
                                : json_get<std::string>(b, "families",
                                                        "regression,reg_arima,gbt,lstm");
    const std::vector<ModelFamily> families = parse_families(family_list);
    FitOptions base_opt = fit_options_from(b);

    ManifestBuilder manifest(ctx, "evaluate");
    nlohmann::json combined = nlohmann::json::array();
    const std::uint64_t command_seed = derive_seed(root, "evaluate");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        manifest.input(inputs[i]);
        const int cluster = cluster_from_filename(inputs[i], static_cast<int>(i) + 1);
        std::istringstream in(read_file(inputs[i]));
        const DailyClusterSeries series = read_series_csv(in, cluster);

        FitOptions opt = base_opt;
        opt.seed = derive_seed(command_seed, "cluster", static_cast<std::uint64_t>(cluster));
        const EvaluationReport report = evaluate_cluster(series, families, opt);
        manifest.artifact("evaluation_c" + std::to_string(cluster) + ".csv", report.to_csv());
        manifest.artifact("evaluation_c" + std::to_string(cluster) + ".json",
                          report.to_json().dump(2) + "\n");
        combined.push_back(report.to_json());
    }
    manifest.artifact("evaluation.json",
                      nlohmann::json{{"clusters", combined}}.dump(2) + "\n");
    manifest.param("families", family_list);
    manifest.param("fit_options", fit_options_json(base_opt));
    manifest.finish(root);
    return 0;
}

// Scenario rows carry only the date and fleet size; calendar features are
// derived so day and season can never disagree with the date.
struct ScenarioInput {
    ScenarioFrame frame;
    std::vector<Date> dates;
};

inline ScenarioInput read_scenario_csv(std::istream& in) {
    const csv::Table t = csv::read_table(in);
    const int date_col = t.column("date");
    const int owners_col = t.column("owners");
    if (date_col < 0 || owners_col < 0)
        throw DataError("scenario: required columns are 'date,owners'");
    ScenarioInput out;
    for (const auto& row : t.rows) {
        const auto d = parse_date(row[static_cast<std::size_t>(date_col)]);
        if (!d) throw DataError("scenario: bad date '" + row[static_cast<std::size_t>(date_col)] + "'");
        long owners = 0;
        try {
            owners = std::stol(row[static_cast<std::size_t>(owners_col)]);
        } catch (const std::exception&) {
            throw DataError("scenario: bad owners '" + row[static_cast<std::size_t>(owners_col)] + "'");
        }
        if (owners < 0) throw DataError("scenario: owners must be non-negative");
        out.frame.rows.push_back({owners, weekday_of(*d), season_of(*d)});
        out.dates.push_back(*d);
    }
    if (out.frame.rows.empty()) throw DataError("scenario: no rows");
    return out;
}

inline int cmd_forecast(const RunContext& ctx, const CommandFlags& flags) {
    const nlohmann::json b = ctx.block("forecast");
    const std::uint64_t root = ctx.require_seed("forecast");
    const std::string input = resolve_input(flags.input, b, "input", "forecast");
    const std::string scenario_path = resolve_input(flags.scenario, b, "scenario", "forecast");
    const std::string family_name_str =
        !flags.family.empty() ? flags.family : json_get<std::string>(b, "family", "regression");
    const ModelFamily family = family_from_name(family_name_str);
    const std::string set_name = !flags.feature_set.empty()
                                     ? flags.feature_set
                                     : json_get<std::string>(b, "feature_set", "base");
    FeatureSet set = FeatureSet::Base;
    bool found = false;
    for (FeatureSet s : kFeatureSets)
        if (set_name == feature_set_name(s)) {
            set = s;
            found = true;
        }
    if (!found) throw UsageError("forecast: unknown feature set '" + set_name + "'");

    ManifestBuilder manifest(ctx, "forecast");
    manifest.input(input);
    manifest.input(scenario_path);

    const int cluster = flags.cluster > 0 ? flags.cluster : cluster_from_filename(input, 1);
    std::istringstream sin(read_file(input));
    const DailyClusterSeries series = read_series_csv(sin, cluster);

    std::istringstream scin(read_file(scenario_path));
    const ScenarioInput scenario = read_scenario_csv(scin);

    const std::uint64_t command_seed = derive_seed(root, "forecast");
    FitOptions opt = fit_options_from(b);

    FitOptions o_p = opt;
    o_p.seed = derive_seed(command_seed, "p-features");
    const ScenarioFrame enriched = build_p_features(series, scenario.frame, family, o_p);

    FitOptions o_u = opt;
    o_u.seed = derive_seed(command_seed, "users");
    const std::vector<double> users = forecast_users(series, scenario.frame, family, o_u);

    FitOptions o_c = opt;
    o_c.seed = derive_seed(command_seed, "consumption");
    const std::vector<double> consumption = forecast_consumption(series, enriched, family, set, o_c);

    std::ostringstream os;
    csv::write_row(os, {"date", "owners", "users", "consumption_kwh"});
    for (std::size_t i = 0; i < scenario.frame.rows.size(); ++i) {
        csv::write_row(os, {format_date(scenario.dates[i]),
                            std::to_string(scenario.frame.rows[i].owners), csv::fmt_double(users[i]),
                            csv::fmt_double(consumption[i])});
    }
    manifest.artifact("forecast.csv", os.str());

    manifest.param("family", family_name_str);
    manifest.param("feature_set", set_name);
    manifest.param("cluster", cluster);
    manifest.param("rows", scenario.frame.rows.size());
    manifest.finish(root);
    return 0;
}

inline UserForecastProvider provider_from_config(const nlohmann::json& b,
                                                 const std::string& provider_name,
                                                 ManifestBuilder& manifest) {
    if (provider_name == "rate") {
        std::map<int, double> rates = {{1, 0.68}, {2, 0.44}, {3, 0.36}};
        if (b.contains("rates")) {
            if (!b.at("rates").is_object()) throw UsageError("impact: 'rates' must be an object");
            for (const auto& item : b.at("rates").items())
                rates[std::atoi(item.key().c_str())] =
                    json_get<double>(b.at("rates"), item.key(), 0.0);
        }
        return rate_user_provider(std::move(rates));
    }
    if (provider_name == "forecaster") {
        if (!b.contains("models") || !b.at("models").is_object())
            throw UsageError("impact: provider 'forecaster' needs a 'models' object");
        std::map<int, TrainedForecaster> models;
        for (const auto& item : b.at("models").items()) {
            const std::string path = json_get<std::string>(b.at("models"), item.key(), "");
            manifest.input(path);
            nlohmann::json mj = nlohmann::json::parse(read_file(path), nullptr, false);
            if (mj.is_discarded())
                throw DataError("impact: model for cluster " + item.key() + " is not valid JSON");
            try {
                models[std::atoi(item.key().c_str())] = mj.get<TrainedForecaster>();
            } catch (const nlohmann::json::exception&) {
                throw DataError("impact: model JSON for cluster " + item.key() +
                                " has the wrong shape");
            }
        }
        return forecaster_user_provider(std::move(models));
    }
    throw UsageError("impact: provider must be 'rate' or 'forecaster'");
}

inline int cmd_impact(const RunContext& ctx, const CommandFlags& flags) {
    const nlohmann::json b = ctx.block("impact");
    ManifestBuilder manifest(ctx, "impact");

    NetworkConfig net;
    const nlohmann::json nb = b.contains("network") ? b.at("network") : nlohmann::json::object();
    if (!nb.is_object()) throw UsageError("impact: 'network' must be an object");
    net.transformer_kva = json_get<double>(nb, "transformer_kva", net.transformer_kva);
    net.households_per_feeder = json_get<int>(nb, "households_per_feeder", net.households_per_feeder);
    net.feeder_capacity_kva = json_get<double>(nb, "feeder_capacity_kva", net.feeder_capacity_kva);
    net.base_load_kva_per_household =
        json_get<double>(nb, "base_load_kva_per_household", net.base_load_kva_per_household);
    net.power_factor = json_get<double>(nb, "power_factor", net.power_factor);
    validate_network_config(net);

    const std::string provider_name =
        !flags.provider.empty() ? flags.provider : json_get<std::string>(b, "provider", "rate");
    const UserForecastProvider provider = provider_from_config(b, provider_name, manifest);

    const std::string season_name =
        !flags.season.empty() ? flags.season : json_get<std::string>(b, "season", "Winter");
    const Season season = parse_season(season_name);
    const int duration_feeder = flags.feeder > 0 ? flags.feeder : json_get<int>(b, "feeder", 2);

    const std::vector<ImpactResult> rows = sweep(net, provider);

    std::ostringstream table;
    write_impact_csv(table, rows);
    manifest.artifact("impact.csv", table.str());

    std::ostringstream cc_plot, uc_plot, dur_plot;
    write_load_vs_penetration_csv(cc_plot, rows, ControlKind::ConsumptionControl, season);
    write_load_vs_penetration_csv(uc_plot, rows, ControlKind::UserControl, season);
    write_duration_vs_level_csv(dur_plot, rows, duration_feeder, season);
    manifest.artifact("load_vs_penetration_consumption_control.csv", cc_plot.str());
    manifest.artifact("load_vs_penetration_user_control.csv", uc_plot.str());
    manifest.artifact("duration_vs_level_f" + std::to_string(duration_feeder) + ".csv",
                      dur_plot.str());

    std::ostringstream mc;
    csv::write_row(mc, {"feeder", "season", "penetration", "min_user_control"});
    constexpr std::array<Season, 4> seasons = {Season::Winter, Season::Spring, Season::Summer,
                                               Season::Autumn};
    for (const auto& [feeder, mix] : net.feeder_mix)
        for (Season s : seasons)
            for (double pen : kPenetrations) {
                const auto level = min_control_for_capacity(net, feeder, s, pen, provider);
                csv::write_row(mc, {std::to_string(feeder), kSeasonNames[static_cast<int>(s)],
                                    csv::fmt_double(pen),
                                    level ? csv::fmt_double(*level) : std::string("none")});
            }
    manifest.artifact("min_control.csv", mc.str());

    manifest.param("provider", provider_name);
    manifest.param("season", season_name);
    manifest.param("feeder", duration_feeder);
    manifest.param("rows", rows.size());
    manifest.finish(ctx.optional_seed("impact"));
    return 0;
}

}  // namespace cli

inline int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"EV charging forecasting and network impact toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed_value = 0;
    std::string out_dir;
    int threads = 1;
    cli::CommandFlags flags;

    struct CommonOpts {
        CLI::Option* seed = nullptr;
        CLI::Option* out = nullptr;
    };
    std::map<std::string, CommonOpts> common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        CommonOpts o;
        o.seed = sub->add_option("--seed", seed_value, "root random seed");
        o.out = sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--threads", threads, "worker thread budget")->check(CLI::PositiveNumber);
        common[sub->get_name()] = o;
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic charging trial");
    add_common(synth);
    synth->add_option("--horizon", flags.horizon, "trial length in days");

    CLI::App* ingest = app.add_subcommand("ingest", "parse and clean raw transactions");
    add_common(ingest);
    ingest->add_option("--input", flags.input, "raw transactions CSV");

    CLI::App* cluster = app.add_subcommand("cluster", "fit the owner clustering model");
    add_common(cluster);
    cluster->add_option("--input", flags.input, "cleaned transactions CSV");
    cluster->add_option("--k-max", flags.k_max, "largest k for elbow selection");

    CLI::App* series = app.add_subcommand("series", "build cleaned per-cluster daily series");
    add_common(series);
    series->add_option("--input", flags.input, "cleaned transactions CSV");
    series->add_option("--model", flags.model, "cluster model JSON");

    CLI::App* evaluate = app.add_subcommand("evaluate", "variable-origin forecast evaluation");
    add_common(evaluate);
    evaluate->add_option("--input", flags.inputs, "per-cluster series CSVs");
    evaluate->add_option("--families", flags.families, "comma-separated model families");

    CLI::App* forecast = app.add_subcommand("forecast", "forecast users and consumption");
    add_common(forecast);
    forecast->add_option("--input", flags.input, "training series CSV");
    forecast->add_option("--scenario", flags.scenario, "scenario CSV (date,owners)");
    forecast->add_option("--family", flags.family, "model family");
    forecast->add_option("--set", flags.feature_set, "feature set");
    forecast->add_option("--cluster", flags.cluster, "cluster id of the series");

    CLI::App* impact = app.add_subcommand("impact", "network impact sweep");
    add_common(impact);
    impact->add_option("--provider", flags.provider, "user provider: rate or forecaster");
    impact->add_option("--season", flags.season, "season for plot data");
    impact->add_option("--feeder", flags.feeder, "feeder for duration plot data");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        cli::RunContext ctx;
        if (!config_path.empty()) ctx.config = cli::parse_config_file(config_path);

        CLI::App* active = app.get_subcommands().at(0);
        const std::string name = active->get_name();
        if (common[name].seed->count() > 0) ctx.seed = seed_value;
        ctx.out = common[name].out->count() > 0
                      ? std::filesystem::path(out_dir)
                      : std::filesystem::path(cli::json_get<std::string>(ctx.config, "out", "."));
        ctx.threads = threads;

        if (name == "synth") return cli::cmd_synth(ctx, flags);
        if (name == "ingest") return cli::cmd_ingest(ctx, flags);
        if (name == "cluster") return cli::cmd_cluster(ctx, flags);
        if (name == "series") return cli::cmd_series(ctx, flags);
        if (name == "evaluate") return cli::cmd_evaluate(ctx, flags);
        if (name == "forecast") return cli::cmd_forecast(ctx, flags);
        return cli::cmd_impact(ctx, flags);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "evcast: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "evcast: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "evcast: %s\n", e.what());
        return 3;
    }
}

}  // namespace evcast
