// SPDX-License-Identifier: Apache-2.0
#include "ksos/cli.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ksos;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("ksos_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const std::string& path, const std::string& body) { std::ofstream(path) << body; }

int ksos_run(std::vector<std::string> args) {
    args.insert(args.begin(), "ksos");
    return cli::run(args);
}

}  // namespace

TEST_CASE("generate is deterministic") {
    TempDir t("gen");
    CHECK(ksos_run({"generate", "--case", "4", "--n", "30", "--seed", "5", "--out", t / "a.csv"}) == cli::kOk);
    CHECK(ksos_run({"generate", "--case", "4", "--n", "30", "--seed", "5", "--out", t / "b.csv"}) == cli::kOk);
    CHECK(slurp(t / "a.csv") == slurp(t / "b.csv"));
    const Dataset d = load_csv(t / "a.csv");
    CHECK(d.size() == 30);
    CHECK(ksos_run({"generate", "--case", "9", "--n", "30", "--out", t / "c.csv"}) == cli::kConfigError);
    CHECK(ksos_run({"generate", "--case", "1", "--n", "30", "--dim", "2", "--out", t / "c.csv"}) == cli::kConfigError);
}

TEST_CASE("config parsing") {
    CHECK_THROWS_AS(cli::parse_config(json{{"alpah", 0.1}}), ConfigError);
    CHECK_THROWS_AS(cli::parse_config(json{{"split", {{"pretrian", 5}}}}), ConfigError);
    CHECK_THROWS_AS(cli::parse_config(json{{"alpha", "big"}}), ConfigError);
    CHECK_THROWS_AS(cli::parse_config(json{{"penalty", "spectral"}}), ConfigError);
    CHECK_THROWS_AS(cli::parse_config(json{{"data", {{"case", 1}, {"csv", "x.csv"}}}}), ConfigError);

    const cli::RunConfig c = cli::parse_config(json{{"data", {{"case", 6}, {"dim", 2}}}, {"penalty", "operator"}});
    CHECK(c.b_value() == 0.0);
    CHECK(c.penalty == PenaltyKind::Operator);
    const cli::RunConfig back = cli::parse_config(cli::to_json(c));
    CHECK(cli::to_json(back) == cli::to_json(c));
    CHECK(cli::parse_config(json::object()).b_value() == 10.0);

    TempDir t("cfg");
    write(t / "bad.json", R"({"alpha": 0.1, "extra": 1})");
    CHECK(ksos_run({"fit", "--config", t / "bad.json", "--out", t / "m"}) == cli::kConfigError);
    write(t / "broken.json", "{ not json");
    CHECK(ksos_run({"fit", "--config", t / "broken.json", "--out", t / "m"}) == cli::kConfigError);
    CHECK(ksos_run({"fit", "--config", t / "missing.json", "--out", t / "m"}) == cli::kConfigError);
}

TEST_CASE("one-point fit writes a reproducible archive") {
    TempDir t("fit1");
    write(t / "one.csv", "x0,y,m_hat\n0,2,0\n");
    const json cfg{{"data", {{"csv", t / "one.csv"}}},
                   {"split", {{"pretrain", 1}, {"calibration", 0}, {"test", 0}}},
                   {"b", 0.0},
                   {"penalty", "none"},
                   {"reg_low", {{"l1", 0.0}, {"l2", 1.0}}},
                   {"reg_up", {{"l1", 0.0}, {"l2", 1.0}}},
                   {"normalize", false},
                   {"solver", {{"tol", 1e-10}}}};
    write(t / "cfg.json", cfg.dump());
    REQUIRE(ksos_run({"fit", "--config", t / "cfg.json", "--out", t / "m1"}) == cli::kOk);
    REQUIRE(ksos_run({"fit", "--config", t / "cfg.json", "--out", t / "m2"}) == cli::kOk);

    const json manifest = json::parse(slurp(t / "m1/manifest.json"));
    CHECK(manifest.at("format") == "ksos-model");
    CHECK(manifest.at("format_version") == 1);
    const json report = json::parse(slurp(t / "m1/report.json"));
    CHECK(report.at("solve").at("objective").get<double>() == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(std::stod(slurp(t / "m1/a_up.csv")) == doctest::Approx(2.0).epsilon(1e-6));
    for (const auto& entry : fs::directory_iterator(t.path / "m1")) {
        const std::string name = entry.path().filename().string();
        CHECK(slurp(t / ("m1/" + name)) == slurp(t / ("m2/" + name)));
    }
}

TEST_CASE("tune, evaluate and benchmark on small configs") {
    TempDir t("pipe");
    const json base{{"data", {{"case", 1}}},
                    {"split", {{"pretrain", 40}, {"calibration", 200}, {"test", 200}}},
                    {"metrics", {{"n_x", 20}, {"n_y", 200}, {"wsc_regions", 5}, {"wsc_size", 50}}},
                    {"tune",
                     {{"theta_points", 2},
                      {"lambda_grid", {0.1, 10.0}},
                      {"folds", 3},
                      {"replicates", 3},
                      {"permutations", 199}}},
                    {"seed", 3}};
    write(t / "cfg.json", base.dump());

    SUBCASE("tune writes a decision") {
        REQUIRE(ksos_run({"tune", "--config", t / "cfg.json", "--out", t / "tune.json"}) == cli::kOk);
        const json j = json::parse(slurp(t / "tune.json")).at("result");
        CHECK(j.contains("decision"));
        CHECK(j.at("lambda").get<double>() > 0.0);
    }
    SUBCASE("evaluate reports metrics for every method") {
        for (const std::string m : {"ksos", "oracle", "whole_line"}) {
            json cfg = base;
            cfg["method"] = m;
            write(t / "e.json", cfg.dump());
            const std::string out = t / ("eval_" + m);
            REQUIRE(ksos_run({"evaluate", "--config", t / "e.json", "--out", out}) == cli::kOk);
            const json j = json::parse(slurp(out + "/metrics.json")).at("metrics");
            const double cov = j.at("coverage").get<double>();
            if (m == "whole_line") {
                CHECK(cov == 1.0);
                CHECK(j.at("mean_width").is_null());
            } else {
                CHECK(cov > 0.75);
            }
            CHECK(fs::exists(out + "/metrics.csv"));
        }
    }
    SUBCASE("benchmark writes one row per seed and lambda") {
        json cfg = base;
        cfg["benchmark"] = {{"seeds", {1, 2}}, {"lambda_grid", {0.1, 1.0}}, {"start", "both"}};
        write(t / "b.json", cfg.dump());
        REQUIRE(ksos_run({"benchmark", "--config", t / "b.json", "--out", t / "bench", "--threads", "2"}) == cli::kOk);
        const std::string rows = slurp(t / "bench/benchmark.csv");
        CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 2 * 2);
        const json s = json::parse(slurp(t / "bench/summary.json"));
        CHECK(s.contains("iterations"));

        cfg["benchmark"]["lambda_grid"] = json::array();
        write(t / "b0.json", cfg.dump());
        CHECK(ksos_run({"benchmark", "--config", t / "b0.json", "--out", t / "bench0"}) == cli::kConfigError);
    }
}

TEST_CASE("bad invocations") {
    CHECK(ksos_run({}) == cli::kConfigError);
    CHECK(ksos_run({"frobnicate"}) == cli::kConfigError);
    CHECK(ksos_run({"--version"}) == cli::kOk);
}
