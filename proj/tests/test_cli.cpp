#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evcast/cli_app.hpp"

using namespace evcast;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;

    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("evcast_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spit(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

int run(std::vector<std::string> args) { return run_cli(args); }

// A small but fully populated trial: three clusters, shortened horizon.
void write_small_config(const fs::path& p) {
    spit(p, R"({
  "synth": {"horizon_days": 120, "owners": {"1": 60, "2": 50, "3": 30}},
  "evaluate": {"families": "regression", "arima_max_p": 2, "arima_max_q": 2},
  "forecast": {"family": "regression"}
})");
}

csv::Table read_csv_file(const fs::path& p) {
    std::istringstream in(slurp(p));
    return csv::read_table(in);
}

}  // namespace

TEST_CASE("usage problems exit with code 1", "[cli]") {
    TempDir dir;
    REQUIRE(run({}) == 1);
    REQUIRE(run({"frobnicate"}) == 1);
    REQUIRE(run({"synth", "--out", dir.file("x")}) == 1);  // stochastic without a seed
    REQUIRE(run({"ingest", "--out", dir.file("x")}) == 1);  // no input anywhere
    REQUIRE(run({"ingest", "--input", dir.file("absent.csv"), "--out", dir.file("x")}) == 1);
    REQUIRE(run({"evaluate", "--seed", "1", "--out", dir.file("x")}) == 1);

    spit(dir.path / "broken.json", "{not json");
    REQUIRE(run({"synth", "--seed", "1", "--config", dir.file("broken.json"),
                 "--out", dir.file("x")}) == 1);

    spit(dir.path / "scalar_block.json", R"({"synth": 5})");
    REQUIRE(run({"synth", "--seed", "1", "--config", dir.file("scalar_block.json"),
                 "--out", dir.file("x")}) == 1);
}

TEST_CASE("synth then ingest closes the loop with zero rejects", "[cli]") {
    TempDir dir;
    write_small_config(dir.path / "cfg.json");
    const std::string out = dir.file("run");

    REQUIRE(run({"synth", "--seed", "42", "--config", dir.file("cfg.json"), "--out", out}) == 0);
    REQUIRE(fs::exists(fs::path(out) / "transactions.csv"));

    REQUIRE(run({"ingest", "--input", out + "/transactions.csv", "--out", out}) == 0);
    REQUIRE(slurp(fs::path(out) / "rejects.jsonl").empty());

    const csv::Table raw = read_csv_file(fs::path(out) / "transactions.csv");
    const csv::Table clean = read_csv_file(fs::path(out) / "transactions_clean.csv");
    REQUIRE(clean.rows.size() == raw.rows.size());

    nlohmann::json manifest =
        nlohmann::json::parse(slurp(fs::path(out) / "manifest_ingest.json"));
    REQUIRE(manifest.at("command") == "ingest");
    REQUIRE(manifest.at("params").at("rows_rejected") == 0);
    REQUIRE(manifest.at("outputs") ==
            nlohmann::json({"rejects.jsonl", "transactions_clean.csv"}));
    REQUIRE(manifest.at("versions").at("evcast") == kToolVersion);
    REQUIRE(manifest.contains("wall_ms"));
}

TEST_CASE("malformed rows land in the reject report, not the clean file", "[cli]") {
    TempDir dir;
    const std::string out = dir.file("run");
    std::ostringstream csv_text;
    csv_text << "charger_id,participant_id,car_kw,car_kwh,group_id,trial_stage,plug_in,plug_out,"
                "consumed_kwh,active_start,car_make,car_model,ev_type\n";
    csv_text << "ch1,p1,7,40,g1,Uncontrolled,2017-01-02 18:00:00,2017-01-02 20:00:00,10,"
                "2017-01-02 18:00:00,A,B,BEV\n";
    csv_text << "ch1,p2,7,40,g1,Uncontrolled,not-a-time,2017-01-02 20:00:00,10,"
                "2017-01-02 18:00:00,A,B,BEV\n";
    spit(dir.path / "raw.csv", csv_text.str());

    REQUIRE(run({"ingest", "--input", dir.file("raw.csv"), "--out", out}) == 0);
    const csv::Table clean = read_csv_file(fs::path(out) / "transactions_clean.csv");
    REQUIRE(clean.rows.size() == 1);
    const std::string rejects = slurp(fs::path(out) / "rejects.jsonl");
    REQUIRE(rejects.find("\"row\": 2") != std::string::npos);

    SECTION("downstream commands refuse dirty input outright") {
        REQUIRE(run({"cluster", "--input", dir.file("raw.csv"), "--seed", "1", "--out", out}) ==
                2);
    }
}

TEST_CASE("cluster, series, evaluate, and forecast chain end to end", "[cli]") {
    TempDir dir;
    write_small_config(dir.path / "cfg.json");
    const std::string out = dir.file("run");
    REQUIRE(run({"synth", "--seed", "42", "--config", dir.file("cfg.json"), "--out", out}) == 0);
    REQUIRE(run({"ingest", "--input", out + "/transactions.csv", "--out", out}) == 0);

    REQUIRE(run({"cluster", "--input", out + "/transactions_clean.csv", "--seed", "42",
                 "--out", out}) == 0);
    nlohmann::json mj = nlohmann::json::parse(slurp(fs::path(out) / "cluster_model.json"));
    const ClusterModel model = mj.get<ClusterModel>();
    REQUIRE(model.k == 3);
    const csv::Table summary = read_csv_file(fs::path(out) / "cluster_summary.csv");
    REQUIRE(summary.rows.size() == 3);
    REQUIRE(summary.column("mean_kwh_per_charge") >= 0);
    REQUIRE(summary.column("charges_per_day") >= 0);

    REQUIRE(run({"series", "--input", out + "/transactions_clean.csv", "--model",
                 out + "/cluster_model.json", "--out", out}) == 0);
    for (int c = 1; c <= 3; ++c) {
        const csv::Table t = read_csv_file(fs::path(out) / ("series_c" + std::to_string(c) + ".csv"));
        REQUIRE(t.rows.size() >= 100);
    }

    REQUIRE(run({"evaluate", "--input", out + "/series_c1.csv", "--seed", "7", "--config",
                 dir.file("cfg.json"), "--out", out}) == 0);
    const csv::Table matrix = read_csv_file(fs::path(out) / "evaluation_c1.csv");
    REQUIRE(matrix.rows.size() == 4);
    const int reg_col = matrix.column("regression");
    REQUIRE(reg_col == 1);
    for (const auto& row : matrix.rows) {
        const double v = std::stod(row[1]);
        REQUIRE(std::isfinite(v));
        REQUIRE(v >= 0.0);
    }
    nlohmann::json combined = nlohmann::json::parse(slurp(fs::path(out) / "evaluation.json"));
    REQUIRE(combined.at("clusters").size() == 1);
    REQUIRE(combined.at("clusters").at(0).at("cluster") == 1);

    spit(dir.path / "scenario.csv", "date,owners\n2017-05-02,60\n2017-05-03,60\n2017-05-04,61\n");
    REQUIRE(run({"forecast", "--input", out + "/series_c1.csv", "--scenario",
                 dir.file("scenario.csv"), "--seed", "7", "--config", dir.file("cfg.json"),
                 "--set", "p_users", "--out", out}) == 0);
    const csv::Table fc = read_csv_file(fs::path(out) / "forecast.csv");
    REQUIRE(fc.rows.size() == 3);
    REQUIRE(fc.rows[0][0] == "2017-05-02");
    for (const auto& row : fc.rows) {
        REQUIRE(std::isfinite(std::stod(row[2])));
        REQUIRE(std::isfinite(std::stod(row[3])));
    }

    SECTION("bad forecast arguments are usage errors") {
        REQUIRE(run({"forecast", "--input", out + "/series_c1.csv", "--scenario",
                     dir.file("scenario.csv"), "--seed", "7", "--family", "nope",
                     "--out", out}) == 1);
        REQUIRE(run({"forecast", "--input", out + "/series_c1.csv", "--scenario",
                     dir.file("scenario.csv"), "--seed", "7", "--set", "nope",
                     "--out", out}) == 1);
    }
    SECTION("broken cluster model is a data error") {
        spit(dir.path / "bad_model.json", "{\"k\": 1}");
        REQUIRE(run({"series", "--input", out + "/transactions_clean.csv", "--model",
                     dir.file("bad_model.json"), "--out", out}) == 2);
    }
}

TEST_CASE("impact command writes the sweep, plots, and control table", "[cli]") {
    TempDir dir;
    const std::string out = dir.file("run");
    REQUIRE(run({"impact", "--out", out}) == 0);

    const csv::Table table = read_csv_file(fs::path(out) / "impact.csv");
    REQUIRE(table.rows.size() == 800);

    bool found = false;
    for (const auto& row : table.rows) {
        if (row[0] == "2" && row[1] == "Winter" && row[2] == "1.000000" &&
            row[3] == "consumption_control" && row[4] == "0.000000") {
            REQUIRE(row[6] == "105.600000");
            REQUIRE(row[7] == "201.600000");
            found = true;
        }
    }
    REQUIRE(found);

    const csv::Table mc = read_csv_file(fs::path(out) / "min_control.csv");
    REQUIRE(mc.rows.size() == 80);
    bool found_mc = false;
    for (const auto& row : mc.rows) {
        if (row[0] == "2" && row[1] == "Winter" && row[2] == "1") {
            REQUIRE(row[3] == "0.8");
            found_mc = true;
        }
    }
    REQUIRE(found_mc);

    REQUIRE(fs::exists(fs::path(out) / "load_vs_penetration_consumption_control.csv"));
    REQUIRE(fs::exists(fs::path(out) / "load_vs_penetration_user_control.csv"));
    REQUIRE(fs::exists(fs::path(out) / "duration_vs_level_f2.csv"));

    SECTION("bad provider and season are usage errors") {
        REQUIRE(run({"impact", "--provider", "psychic", "--out", out}) == 1);
        REQUIRE(run({"impact", "--season", "Monsoon", "--out", out}) == 1);
    }
}

TEST_CASE("identical seed and config reproduce artifacts byte for byte", "[cli]") {
    TempDir dir;
    write_small_config(dir.path / "cfg.json");
    const std::string a = dir.file("a");
    const std::string b = dir.file("b");

    for (const std::string& out : {a, b})
        REQUIRE(run({"synth", "--seed", "9", "--config", dir.file("cfg.json"), "--out", out}) ==
                0);
    REQUIRE(slurp(fs::path(a) / "transactions.csv") == slurp(fs::path(b) / "transactions.csv"));

    nlohmann::json ma = nlohmann::json::parse(slurp(fs::path(a) / "manifest_synth.json"));
    nlohmann::json mb = nlohmann::json::parse(slurp(fs::path(b) / "manifest_synth.json"));
    ma.erase("wall_ms");
    mb.erase("wall_ms");
    REQUIRE(ma == mb);

    const std::string c = dir.file("c");
    REQUIRE(run({"synth", "--seed", "10", "--config", dir.file("cfg.json"), "--out", c}) == 0);
    REQUIRE(slurp(fs::path(a) / "transactions.csv") != slurp(fs::path(c) / "transactions.csv"));

    SECTION("thread budget does not change artifacts") {
        const std::string d = dir.file("d");
        REQUIRE(run({"synth", "--seed", "9", "--config", dir.file("cfg.json"), "--out", d,
                     "--threads", "4"}) == 0);
        REQUIRE(slurp(fs::path(a) / "transactions.csv") ==
                slurp(fs::path(d) / "transactions.csv"));
    }
}

TEST_CASE("config file supplies defaults that flags override", "[cli]") {
    TempDir dir;
    spit(dir.path / "cfg.json",
         R"({"seed": 5, "out": ")" + dir.file("from_config") + R"(",
             "synth": {"horizon_days": 40, "owners": {"1": 10, "2": 10, "3": 10}}})");

    REQUIRE(run({"synth", "--config", dir.file("cfg.json")}) == 0);
    REQUIRE(fs::exists(fs::path(dir.file("from_config")) / "transactions.csv"));

    REQUIRE(run({"synth", "--config", dir.file("cfg.json"), "--out", dir.file("flagged")}) == 0);
    REQUIRE(fs::exists(fs::path(dir.file("flagged")) / "transactions.csv"));

    nlohmann::json m = nlohmann::json::parse(
        slurp(fs::path(dir.file("from_config")) / "manifest_synth.json"));
    REQUIRE(m.at("seed") == 5);
    REQUIRE(m.at("params").at("horizon_days") == 40);
}
