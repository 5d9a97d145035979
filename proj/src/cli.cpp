// SPDX-License-Identifier: Apache-2.0
#include "ksos/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace ksos::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void expect_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

RegParams read_reg(const json& j, const std::string& where) {
    expect_keys(j, {"l1", "l2"}, where);
    RegParams p;
    read(j, "l1", p.l1);
    read(j, "l2", p.l2);
    return p;
}

json reg_json(const RegParams& p) { return {{"l1", p.l1}, {"l2", p.l2}}; }

template <class T>
json opt_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

void write_text(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

void write_matrix(const std::string& path, const Matrix& m) {
    std::string text;
    char buf[40];
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            if (j) text += ',';
            text += buf;
        }
        text += '\n';
    }
    write_text(path, text);
}

json kernel_json(const KernelModel& km) {
    return {{"family", "matern52"},
            {"lengthscale", km.spec.lengthscale},
            {"variance", km.spec.variance},
            {"jitter", km.factor.jitter}};
}

json penalty_json(const Penalty& p) {
    return {{"kind", to_string(p.kind)}, {"l1", p.l1}, {"l2", p.l2}, {"lambda", p.lambda}};
}

Penalty penalty_for(PenaltyKind kind, double lambda) {
    switch (kind) {
        case PenaltyKind::None: return Penalty::none();
        case PenaltyKind::Operator: return Penalty::op(lambda, lambda);
        case PenaltyKind::TrainSet: return Penalty::trainset(lambda);
    }
    return Penalty::none();
}

double median_or_one(const Matrix& x) {
    if (x.rows() < 2) return 1.0;
    const double m = median_pairwise_distance(x);
    return m > 0.0 ? m : 1.0;
}

BandHyper hyper_from(const RunConfig& cfg, const Matrix& x, double lambda) {
    BandHyper h;
    const double med = median_or_one(x);
    h.theta_low = cfg.theta_low.value_or(med);
    h.theta_up = cfg.theta_up.value_or(cfg.theta_low.value_or(med));
    h.b = cfg.b_value();
    h.reg_low = cfg.reg_low;
    h.reg_up = cfg.reg_up;
    h.penalty = penalty_for(cfg.penalty, lambda);
    h.jitter = cfg.jitter;
    return h;
}

}  // namespace

TuneConfig tune_config(const RunConfig& cfg, std::uint64_t seed) {
    TuneConfig tc = cfg.tune;
    tc.b = cfg.b_value();
    tc.penalty = cfg.penalty;
    tc.reg_low = cfg.reg_low;
    tc.reg_up = cfg.reg_up;
    tc.normalize = cfg.normalize;
    tc.jitter = cfg.jitter;
    tc.solver = cfg.solver;
    tc.seed = seed;
    return tc;
}

namespace {

json base_report(const RunConfig& cfg, const std::string& command, std::uint64_t seed) {
    return {{"command", command}, {"version", version()}, {"seed", seed}, {"config", to_json(cfg)}};
}

void setup_logging() {
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("ksos");
        spdlog::set_default_logger(logger);
    });
    spdlog::level::level_enum level = spdlog::level::warn;
    if (const char* env = std::getenv("KSOS_LOG")) level = spdlog::level::from_str(env);
    spdlog::set_level(level);
}

std::string require_out(const std::string& out, const char* command) {
    if (out.empty()) throw ConfigError(std::string(command) + ": --out is required");
    return out;
}

// --- commands --------------------------------------------------------------

int cmd_generate(RunConfig cfg, std::optional<int> case_id, std::optional<Index> n, std::optional<int> dim,
                 const std::string& out) {
    if (case_id) cfg.data.case_id = case_id;
    if (n) cfg.data.n = *n;
    if (dim) cfg.data.dim = *dim;
    if (!cfg.data.case_id) throw ConfigError("generate: no synthetic case given");
    if (cfg.data.n < 1) throw ConfigError("generate: n must be positive");
    SyntheticCase c;
    try {
        c = SyntheticCase::make(*cfg.data.case_id, cfg.data.dim);
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("generate: ") + e.what());
    }
    const Dataset ds = generate(c, cfg.data.n, cfg.seed);
    const std::string path = require_out(out, "generate");
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    write_csv(ds, path);
    spdlog::info("wrote {} rows to {}", ds.size(), path);
    return kOk;
}

int cmd_fit(const RunConfig& cfg, const std::string& out) {
    const std::string dir = require_out(out, "fit");
    const Prepared prep = prepare(cfg, cfg.seed);
    const Fitted fitted = fit_pipeline(cfg, prep);
    write_archive(dir, cfg, fitted);
    if (!fitted.model.report.converged) {
        spdlog::error("fit: solver did not converge ({})", fitted.model.report.message);
        return kNumericalError;
    }
    return kOk;
}

int cmd_tune(const RunConfig& cfg, const std::string& out) {
    const Prepared prep = prepare(cfg, cfg.seed);
    const TuneConfig tc = tune_config(cfg, cfg.seed);
    const TuneResult t = tune(prep.split.pretrain.x, prep.split.pretrain.y, prep.predictor, tc);
    json report = base_report(cfg, "tune", cfg.seed);
    report["result"] = to_json(t);
    const std::string text = report.dump(2) + "\n";
    if (out.empty())
        std::fputs(text.c_str(), stdout);
    else
        write_text(out, text);
    return kOk;
}

MetricsReport evaluate_one(const RunConfig& cfg, const Prepared& prep, const Fitted* fitted, const std::string& method,
                           std::uint64_t seed) {
    const IntervalFn fn = interval_method(method, cfg, prep, fitted);
    const auto& test = prep.split.test;
    if (test.size() < 1) throw ConfigError("evaluate: the test block is empty");
    MetricsReport r =
        evaluate_intervals(fn, test.x, test.y, cfg.alpha, prep.synthetic ? &*prep.synthetic : nullptr, seed,
                           cfg.metrics.n_x, cfg.metrics.n_y, cfg.metrics.wsc_regions, cfg.metrics.wsc_size);
    r.method = method;
    return r;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& out) {
    const std::string dir = require_out(out, "evaluate");
    const Prepared prep = prepare(cfg, cfg.seed);
    std::optional<Fitted> fitted;
    if (cfg.method == "ksos") fitted = fit_pipeline(cfg, prep);
    const MetricsReport r = evaluate_one(cfg, prep, fitted ? &*fitted : nullptr, cfg.method, cfg.seed);
    json report = base_report(cfg, "evaluate", cfg.seed);
    report["metrics"] = to_json(r);
    if (fitted) {
        report["solve"] = to_json(fitted->model.report);
        if (fitted->calibration) report["calibration"] = to_json(*fitted->calibration);
        if (fitted->tuned) report["tune"] = to_json(*fitted->tuned);
    }
    fs::create_directories(dir);
    write_text((fs::path(dir) / "metrics.json").string(), report.dump(2) + "\n");
    write_text((fs::path(dir) / "metrics.csv").string(), metrics_csv_header() + "\n" + metrics_csv_row(r) + "\n");
    return kOk;
}

struct BenchRow {
    std::uint64_t seed = 0;
    std::string method;
    std::optional<double> lambda;
    MetricsReport metrics;
    int iterations = 0;
};

struct SeedOutcome {
    std::vector<BenchRow> rows;
    long warm_iterations = 0;
    long cold_iterations = 0;
    std::optional<double> tuned_lambda;
};

SeedOutcome bench_seed(const RunConfig& cfg, std::uint64_t seed) {
    SeedOutcome out;
    const Prepared prep = prepare(cfg, seed);
    const auto& pre = prep.split.pretrain;
    const NormalizationRecord norm = cfg.normalize ? normalize_hyperparameters(pre.x, pre.y, prep.predictor,
                                                                               cfg.b_value(), cfg.solver, cfg.jitter)
                                                   : NormalizationRecord{};
    const auto& grid = cfg.benchmark.lambda_grid;
    const bool run_warm = cfg.benchmark.start != "cold";
    const bool run_cold = cfg.benchmark.start != "warm";
    const bool need_ksos =
        std::find(cfg.benchmark.methods.begin(), cfg.benchmark.methods.end(), "ksos") != cfg.benchmark.methods.end();

    // The sweep whose models feed the metrics: warm when it runs, else cold.
    std::vector<Fitted> models;
    for (int pass = 0; pass < 2; ++pass) {
        const bool warm = pass == 0;
        if ((warm && !run_warm) || (!warm && !run_cold)) continue;
        const bool keep = need_ksos && (warm || !run_warm);
        std::optional<DualState> init;
        for (double lam : grid) {
            const BandHyper h = hyper_from(cfg, pre.x, lam);
            BandModel bm = fit_band_model(pre.x, pre.y, prep.predictor, h, norm, cfg.solver, warm ? init : std::nullopt);
            (warm ? out.warm_iterations : out.cold_iterations) += bm.report.iterations;
            if (warm) init = bm.dual;
            if (keep) {
                Fitted f{std::move(bm), std::nullopt, std::nullopt};
                if (prep.split.cal.size() > 0)
                    f.calibration = calibrate(f.model, prep.split.cal.x, prep.split.cal.y, cfg.alpha, cfg.calibration,
                                              cfg.alpha_low.value_or(-1.0));
                models.push_back(std::move(f));
            }
        }
    }

    for (const auto& method : cfg.benchmark.methods) {
        if (method == "ksos") {
            for (std::size_t k = 0; k < grid.size(); ++k) {
                BenchRow row{seed, method, grid[k], evaluate_one(cfg, prep, &models[k], method, seed),
                             models[k].model.report.iterations};
                out.rows.push_back(std::move(row));
            }
        } else {
            out.rows.push_back({seed, method, std::nullopt, evaluate_one(cfg, prep, nullptr, method, seed), 0});
        }
    }

    if (cfg.benchmark.tune) {
        TuneConfig tc = tune_config(cfg, seed);
        if (tc.lambda_grid.empty()) tc.lambda_grid = grid;
        out.tuned_lambda = tune(pre.x, pre.y, prep.predictor, tc).lambda;
    }
    return out;
}

int cmd_benchmark(const RunConfig& cfg, const std::string& out, int threads) {
    const std::string dir = require_out(out, "benchmark");
    const auto& bc = cfg.benchmark;
    if (bc.lambda_grid.empty()) throw ConfigError("benchmark: λ grid is empty");
    if (bc.seeds.empty()) throw ConfigError("benchmark: no seeds");
    if (cfg.penalty == PenaltyKind::None) throw ConfigError("benchmark: a λ sweep needs a symmetry penalty");
    if (!std::is_sorted(bc.lambda_grid.begin(), bc.lambda_grid.end()))
        throw ConfigError("benchmark: λ grid must be ascending");
    if (threads < 1) throw ConfigError("--threads must be at least 1");

    std::vector<SeedOutcome> results(bc.seeds.size());
    std::vector<std::exception_ptr> errors(bc.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < bc.seeds.size(); k = next++) {
            try {
                results[k] = bench_seed(cfg, bc.seeds[k]);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), bc.seeds.size());
    for (std::size_t t = 1; t < count; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    fs::create_directories(dir);
    std::string rows = "lambda,iterations," + metrics_csv_header() + "\n";
    std::string ledger = "seed,mode,total_iterations\n";
    json summary = base_report(cfg, "benchmark", cfg.seed);
    std::map<std::string, std::map<double, std::vector<const MetricsReport*>>> by_point;
    long warm_total = 0, cold_total = 0;
    json selected = json::object();
    char buf[64];
    for (std::size_t k = 0; k < results.size(); ++k) {
        const auto& r = results[k];
        for (const auto& row : r.rows) {
            if (row.lambda)
                std::snprintf(buf, sizeof buf, "%.10g,%d,", *row.lambda, row.iterations);
            else
                std::snprintf(buf, sizeof buf, ",%d,", row.iterations);
            rows += buf + metrics_csv_row(row.metrics) + "\n";
            by_point[row.method][row.lambda.value_or(std::numeric_limits<double>::quiet_NaN())].push_back(&row.metrics);
        }
        if (bc.start != "cold") {
            ledger += std::to_string(bc.seeds[k]) + ",warm," + std::to_string(r.warm_iterations) + "\n";
            warm_total += r.warm_iterations;
        }
        if (bc.start != "warm") {
            ledger += std::to_string(bc.seeds[k]) + ",cold," + std::to_string(r.cold_iterations) + "\n";
            cold_total += r.cold_iterations;
        }
        if (r.tuned_lambda) {
            std::snprintf(buf, sizeof buf, "%.10g", *r.tuned_lambda);
            selected[buf] = selected.value(buf, 0) + 1;
        }
    }
    json agg = json::array();
    for (const auto& [method, points] : by_point) {
        for (const auto& [lam, reports] : points) {
            double cov = 0.0, width = 0.0, acg = 0.0, wsc_sum = 0.0;
            bool have_acg = true;
            for (const auto* m : reports) {
                cov += m->coverage;
                width += m->width.mean_width;
                wsc_sum += m->wsc.wsc;
                if (m->acg)
                    acg += m->acg->acg;
                else
                    have_acg = false;
            }
            const auto n = static_cast<double>(reports.size());
            agg.push_back({{"method", method},
                           {"lambda", std::isnan(lam) ? json(nullptr) : json(lam)},
                           {"runs", reports.size()},
                           {"mean_coverage", cov / n},
                           {"mean_width", width / n},
                           {"mean_acg", have_acg ? json(acg / n) : json(nullptr)},
                           {"mean_wsc", wsc_sum / n}});
        }
    }
    summary["aggregates"] = agg;
    summary["iterations"] = {{"warm", bc.start != "cold" ? json(warm_total) : json(nullptr)},
                             {"cold", bc.start != "warm" ? json(cold_total) : json(nullptr)}};
    if (bc.tune) summary["selected_lambda"] = selected;
    write_text((fs::path(dir) / "benchmark.csv").string(), rows);
    write_text((fs::path(dir) / "iterations.csv").string(), ledger);
    write_text((fs::path(dir) / "summary.json").string(), summary.dump(2) + "\n");
    return kOk;
}

}  // namespace

// --- config ------------------------------------------------------------------

double RunConfig::b_value() const {
    if (b) return *b;
    return data.case_id && *data.case_id == 6 ? 0.0 : 10.0;
}

RunConfig parse_config(const json& j) {
    RunConfig c;
    try {
        expect_keys(j,
                    {"data", "split", "alpha", "b", "penalty", "lambda", "theta_low", "theta_up", "reg_low", "reg_up",
                     "normalize", "calibration", "alpha_low", "jitter", "predictor", "solver", "tune", "use_tuned",
                     "metrics", "method", "benchmark", "seed"},
                    "config");
        if (j.contains("data")) {
            const json& d = j.at("data");
            expect_keys(d, {"case", "dim", "n", "csv"}, "data");
            read_opt(d, "case", c.data.case_id);
            read(d, "dim", c.data.dim);
            read(d, "n", c.data.n);
            read(d, "csv", c.data.csv);
        }
        if (j.contains("split")) {
            const json& s = j.at("split");
            expect_keys(s, {"pretrain", "calibration", "test"}, "split");
            read(s, "pretrain", c.split.pretrain);
            read(s, "calibration", c.split.calibration);
            read(s, "test", c.split.test);
        }
        read(j, "alpha", c.alpha);
        read_opt(j, "b", c.b);
        if (j.contains("penalty")) c.penalty = penalty_kind_from_string(j.at("penalty").get<std::string>());
        read(j, "lambda", c.lambda);
        read_opt(j, "theta_low", c.theta_low);
        read_opt(j, "theta_up", c.theta_up);
        if (j.contains("reg_low")) c.reg_low = read_reg(j.at("reg_low"), "reg_low");
        if (j.contains("reg_up")) c.reg_up = read_reg(j.at("reg_up"), "reg_up");
        read(j, "normalize", c.normalize);
        if (j.contains("calibration"))
            c.calibration = calibration_mode_from_string(j.at("calibration").get<std::string>());
        read_opt(j, "alpha_low", c.alpha_low);
        read(j, "jitter", c.jitter);
        if (j.contains("predictor")) {
            const json& p = j.at("predictor");
            expect_keys(p, {"lengthscale", "noise", "use_column"}, "predictor");
            read_opt(p, "lengthscale", c.predictor.lengthscale);
            read_opt(p, "noise", c.predictor.noise);
            read(p, "use_column", c.predictor.use_column);
        }
        if (j.contains("solver")) {
            const json& s = j.at("solver");
            expect_keys(s, {"max_iter", "tol", "memory", "objective_scale"}, "solver");
            read(s, "max_iter", c.solver.max_iter);
            read(s, "tol", c.solver.tol);
            read(s, "memory", c.solver.memory);
            read(s, "objective_scale", c.solver.objective_scale);
        }
        if (j.contains("tune")) {
            const json& t = j.at("tune");
            expect_keys(t,
                        {"theta_grid", "theta_points", "lambda_grid", "lambda_points", "folds", "replicates",
                         "permutations", "level", "asymmetric_refine", "full_2d", "replicate_mode",
                         "homoscedastic_factor"},
                        "tune");
            read(t, "theta_grid", c.tune.theta_grid);
            read(t, "theta_points", c.tune.theta_points);
            read(t, "lambda_grid", c.tune.lambda_grid);
            read(t, "lambda_points", c.tune.lambda_points);
            read(t, "folds", c.tune.folds);
            read(t, "replicates", c.tune.replicates);
            read(t, "permutations", c.tune.permutations);
            read(t, "level", c.tune.level);
            read(t, "asymmetric_refine", c.tune.asymmetric_refine);
            read(t, "full_2d", c.tune.full_2d);
            if (t.contains("replicate_mode"))
                c.tune.replicate_mode = replicate_mode_from_string(t.at("replicate_mode").get<std::string>());
            read(t, "homoscedastic_factor", c.tune.homoscedastic_factor);
        }
        read(j, "use_tuned", c.use_tuned);
        if (j.contains("metrics")) {
            const json& m = j.at("metrics");
            expect_keys(m, {"n_x", "n_y", "wsc_regions", "wsc_size"}, "metrics");
            read(m, "n_x", c.metrics.n_x);
            read(m, "n_y", c.metrics.n_y);
            read(m, "wsc_regions", c.metrics.wsc_regions);
            read(m, "wsc_size", c.metrics.wsc_size);
        }
        read(j, "method", c.method);
        if (j.contains("benchmark")) {
            const json& b = j.at("benchmark");
            expect_keys(b, {"seeds", "repetitions", "lambda_grid", "start", "methods", "tune"}, "benchmark");
            read(b, "seeds", c.benchmark.seeds);
            if (b.contains("repetitions")) {
                if (b.contains("seeds")) throw ConfigError("benchmark: give either seeds or repetitions");
                const int reps = b.at("repetitions").get<int>();
                if (reps < 1) throw ConfigError("benchmark: repetitions must be positive");
                for (int k = 0; k < reps; ++k) c.benchmark.seeds.push_back(static_cast<std::uint64_t>(k));
            }
            read(b, "lambda_grid", c.benchmark.lambda_grid);
            read(b, "start", c.benchmark.start);
            read(b, "methods", c.benchmark.methods);
            read(b, "tune", c.benchmark.tune);
        }
        read(j, "seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    // Value checks.
    if (c.data.case_id && !c.data.csv.empty()) throw ConfigError("data: give either a case or a csv path");
    if (c.data.dim < 1) throw ConfigError("data.dim must be positive");
    if (c.data.n < 0) throw ConfigError("data.n must be nonnegative");
    if (c.split.pretrain < 1 || c.split.calibration < 0 || c.split.test < 0)
        throw ConfigError("split: pretrain must be positive and the other blocks nonnegative");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (c.alpha_low && !(*c.alpha_low > 0.0 && *c.alpha_low < c.alpha))
        throw ConfigError("alpha_low must lie in (0, alpha)");
    if (c.b && !(*c.b >= 0.0)) throw ConfigError("b must be nonnegative");
    if (!(c.lambda > 0.0)) throw ConfigError("lambda must be positive");
    for (const auto& t : {c.theta_low, c.theta_up})
        if (t && !(*t > 0.0)) throw ConfigError("lengthscales must be positive");
    if (!(c.jitter >= 0.0)) throw ConfigError("jitter must be nonnegative");
    if (c.method != "ksos" && c.method != "oracle" && c.method != "whole_line")
        throw ConfigError("method must be ksos, oracle or whole_line");
    if (c.benchmark.start != "warm" && c.benchmark.start != "cold" && c.benchmark.start != "both")
        throw ConfigError("benchmark.start must be warm, cold or both");
    for (const auto& m : c.benchmark.methods)
        if (m != "ksos" && m != "oracle" && m != "whole_line") throw ConfigError("benchmark: unknown method '" + m + "'");
    if (c.solver.max_iter < 1 || !(c.solver.tol > 0.0) || c.solver.memory < 1)
        throw ConfigError("solver settings must be positive");
    if (c.metrics.n_x < 1 || c.metrics.n_y < 1 || c.metrics.wsc_regions < 1 || c.metrics.wsc_size < 1)
        throw ConfigError("metrics sizes must be positive");
    try {
        c.reg_low.validate();
        c.reg_up.validate();
        TuneConfig t = c.tune;
        t.penalty = c.penalty;
        t.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return parse_config(j);
}

json to_json(const RunConfig& c) {
    json j;
    j["data"] = {{"case", opt_json(c.data.case_id)}, {"dim", c.data.dim}, {"n", c.data.n}, {"csv", c.data.csv}};
    j["split"] = {{"pretrain", c.split.pretrain}, {"calibration", c.split.calibration}, {"test", c.split.test}};
    j["alpha"] = c.alpha;
    j["b"] = c.b_value();
    j["penalty"] = to_string(c.penalty);
    j["lambda"] = c.lambda;
    j["theta_low"] = opt_json(c.theta_low);
    j["theta_up"] = opt_json(c.theta_up);
    j["reg_low"] = reg_json(c.reg_low);
    j["reg_up"] = reg_json(c.reg_up);
    j["normalize"] = c.normalize;
    j["calibration"] = to_string(c.calibration);
    j["alpha_low"] = opt_json(c.alpha_low);
    j["jitter"] = c.jitter;
    j["predictor"] = {{"lengthscale", opt_json(c.predictor.lengthscale)},
                      {"noise", opt_json(c.predictor.noise)},
                      {"use_column", c.predictor.use_column}};
    j["solver"] = {{"max_iter", c.solver.max_iter},
                   {"tol", c.solver.tol},
                   {"memory", c.solver.memory},
                   {"objective_scale", c.solver.objective_scale}};
    j["tune"] = {{"theta_grid", c.tune.theta_grid},
                 {"theta_points", c.tune.theta_points},
                 {"lambda_grid", c.tune.lambda_grid},
                 {"lambda_points", c.tune.lambda_points},
                 {"folds", c.tune.folds},
                 {"replicates", c.tune.replicates},
                 {"permutations", c.tune.permutations},
                 {"level", c.tune.level},
                 {"asymmetric_refine", c.tune.asymmetric_refine},
                 {"full_2d", c.tune.full_2d},
                 {"replicate_mode", to_string(c.tune.replicate_mode)},
                 {"homoscedastic_factor", c.tune.homoscedastic_factor}};
    j["use_tuned"] = c.use_tuned;
    j["metrics"] = {{"n_x", c.metrics.n_x},
                    {"n_y", c.metrics.n_y},
                    {"wsc_regions", c.metrics.wsc_regions},
                    {"wsc_size", c.metrics.wsc_size}};
    j["method"] = c.method;
    j["benchmark"] = {{"seeds", c.benchmark.seeds},
                      {"lambda_grid", c.benchmark.lambda_grid},
                      {"start", c.benchmark.start},
                      {"methods", c.benchmark.methods},
                      {"tune", c.benchmark.tune}};
    j["seed"] = c.seed;
    return j;
}

json to_json(const NormalizationRecord& n) {
    return {{"applied", n.applied},     {"mean_width", n.mean_width}, {"nuclear_low", n.nuclear_low},
            {"nuclear_up", n.nuclear_up}, {"frob2_low", n.frob2_low},   {"frob2_up", n.frob2_up},
            {"note", n.note}};
}

json to_json(const SolveReport& r) {
    return {{"iterations", r.iterations},
            {"evaluations", r.evaluations},
            {"converged", r.converged},
            {"message", r.message},
            {"objective", r.objective},
            {"pg_norm", r.pg_norm},
            {"constraint_violation", r.constraint_violation},
            {"duality_gap_rel", opt_json(r.duality_gap_rel)},
            {"objective_trace", r.objective_trace}};
}

json to_json(const CalibrationResult& c) {
    auto q = [](const ConformalQuantile& v) {
        return json{{"value", v.infinite ? json(nullptr) : json(v.value)}, {"rank", v.k}, {"infinite", v.infinite}};
    };
    json j{{"mode", to_string(c.mode)}, {"alpha", c.alpha}, {"m", c.m}};
    if (c.mode == CalibrationMode::Symmetric) {
        j["q"] = q(c.q);
    } else {
        j["alpha_low"] = c.alpha_low;
        j["alpha_up"] = c.alpha_up;
        j["q_low"] = q(c.q_low);
        j["q_up"] = q(c.q_up);
    }
    return j;
}

json to_json(const TuneResult& t) {
    json j;
    j["decision"] = to_string(t.decision);
    j["theta_low"] = t.theta_low;
    j["theta_up"] = t.theta_up;
    j["lambda"] = t.lambda;
    j["lambda_index"] = t.lambda_index;
    j["homoscedastic_fallback"] = t.homoscedastic_fallback;
    j["theta_grid"] = t.theta_grid;
    json pairs = json::array();
    for (const auto& [lo, up] : t.theta_pairs) pairs.push_back({lo, up});
    j["theta_pairs"] = pairs;
    j["lambda_grid"] = t.lambda_grid;
    j["hsic_table"] = t.hsic_table;
    json per = json::array();
    for (const auto& s : t.per_lambda)
        per.push_back({{"lambda", s.lambda},
                       {"theta_low", s.theta_low},
                       {"theta_up", s.theta_up},
                       {"hsic", s.hsic},
                       {"usable", s.usable},
                       {"replicates", s.replicates}});
    j["per_lambda"] = per;
    j["kruskal_wallis"] = t.kw ? json{{"h", t.kw->h}, {"p", t.kw->p}} : json(nullptr);
    j["independence"] = t.independence ? json{{"hsic", t.independence->hsic},
                                              {"p", t.independence->p},
                                              {"fallback", t.independence->fallback}}
                                       : json(nullptr);
    j["normalization"] = to_json(t.normalization);
    j["iterations"] = t.iterations;
    j["failed_points"] = t.failed_points;
    return j;
}

// --- pipeline ----------------------------------------------------------------

Prepared prepare(const RunConfig& cfg, std::uint64_t seed) {
    Prepared p;
    const Index wanted = cfg.split.pretrain + cfg.split.calibration + cfg.split.test;
    if (cfg.data.case_id) {
        try {
            p.synthetic = SyntheticCase::make(*cfg.data.case_id, cfg.data.dim);
        } catch (const ParameterError& e) {
            throw ConfigError(std::string("data: ") + e.what());
        }
        const Index n = cfg.data.n > 0 ? cfg.data.n : wanted;
        p.data = generate(*p.synthetic, n, seed);
    } else if (!cfg.data.csv.empty()) {
        p.data = load_csv(cfg.data.csv);
    } else {
        throw ConfigError("data: give a synthetic case or a csv path");
    }
    if (wanted > p.data.size())
        throw ConfigError("split: " + std::to_string(wanted) + " rows requested but the data has " +
                          std::to_string(p.data.size()));
    try {
        p.split = split(p.data, SplitPlan{cfg.split.pretrain, cfg.split.calibration, cfg.split.test, seed});
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("split: ") + e.what());
    }
    const auto& pre = p.split.pretrain;
    if (p.data.m_hat && cfg.predictor.use_column)
        p.predictor = Predictor::precomputed(p.data.x, *p.data.m_hat);
    else
        p.predictor = fit_kernel_ridge(pre.x, pre.y, cfg.predictor.lengthscale, cfg.predictor.noise);
    return p;
}

Fitted fit_pipeline(const RunConfig& cfg, const Prepared& prep) {
    const auto& pre = prep.split.pretrain;
    NormalizationRecord norm;
    BandHyper h = hyper_from(cfg, pre.x, cfg.lambda);
    std::optional<TuneResult> tuned;
    if (cfg.use_tuned) {
        const TuneConfig tc = tune_config(cfg, cfg.seed);
        tuned = tune(pre.x, pre.y, prep.predictor, tc);
        h.theta_low = tuned->theta_low;
        h.theta_up = tuned->theta_up;
        h.penalty = penalty_for(cfg.penalty, tuned->lambda);
        norm = tuned->normalization;
    } else if (cfg.normalize) {
        norm = normalize_hyperparameters(pre.x, pre.y, prep.predictor, cfg.b_value(), cfg.solver, cfg.jitter);
    }
    Fitted out{fit_band_model(pre.x, pre.y, prep.predictor, h, norm, cfg.solver), std::nullopt, std::move(tuned)};
    if (prep.split.cal.size() > 0)
        out.calibration = calibrate(out.model, prep.split.cal.x, prep.split.cal.y, cfg.alpha, cfg.calibration,
                                    cfg.alpha_low.value_or(-1.0));
    return out;
}

IntervalFn interval_method(const std::string& method, const RunConfig& cfg, const Prepared& prep,
                           const Fitted* fitted) {
    if (method == "ksos") {
        if (!fitted || !fitted->calibration) throw ConfigError("ksos intervals need a calibration block");
        const BandModel* bm = &fitted->model;
        const CalibrationResult cal = *fitted->calibration;
        return [bm, cal](const Matrix& x) { return intervals(*bm, cal, x); };
    }
    if (method == "oracle") {
        if (!prep.synthetic) throw ConfigError("oracle intervals need a synthetic case");
        const SyntheticCase c = *prep.synthetic;
        const double alpha = cfg.alpha;
        return [c, alpha](const Matrix& x) {
            std::vector<Interval> iv(static_cast<std::size_t>(x.rows()));
            for (Index i = 0; i < x.rows(); ++i) {
                const Vector xi = x.row(i).transpose();
                iv[static_cast<std::size_t>(i)] = {c.conditional_quantile(xi, alpha / 2.0),
                                                   c.conditional_quantile(xi, 1.0 - alpha / 2.0), false};
            }
            return iv;
        };
    }
    if (method == "whole_line") {
        return [](const Matrix& x) {
            const double inf = std::numeric_limits<double>::infinity();
            return std::vector<Interval>(static_cast<std::size_t>(x.rows()), Interval{-inf, inf, false});
        };
    }
    throw ConfigError("unknown method '" + method + "'");
}

void write_archive(const std::string& dir, const RunConfig& cfg, const Fitted& fitted) {
    const BandModel& bm = fitted.model;
    fs::create_directories(dir);
    const fs::path root(dir);
    write_matrix((root / "x_train.csv").string(), bm.x_train());
    write_matrix((root / "a_low.csv").string(), bm.bands.a_low);
    write_matrix((root / "a_up.csv").string(), bm.bands.a_up);
    write_matrix((root / "v_low.csv").string(), bm.kernel_low.factor.V);
    write_matrix((root / "v_up.csv").string(), bm.kernel_up.factor.V);

    json files = {{"x_train", "x_train.csv"}, {"a_low", "a_low.csv"}, {"a_up", "a_up.csv"},
                  {"v_low", "v_low.csv"},     {"v_up", "v_up.csv"}};
    json pred;
    if (bm.predictor.mode() == Predictor::Mode::KernelRidge) {
        write_matrix((root / "predictor_x.csv").string(), bm.predictor.x_train());
        write_matrix((root / "predictor_weights.csv").string(), bm.predictor.weights());
        files["predictor_x"] = "predictor_x.csv";
        files["predictor_weights"] = "predictor_weights.csv";
        pred = {{"mode", "kernel_ridge"},
                {"family", "matern52"},
                {"lengthscale", bm.predictor.spec().lengthscale},
                {"variance", bm.predictor.spec().variance},
                {"noise", bm.predictor.noise()}};
    } else {
        const auto [px, py] = bm.predictor.table();
        write_matrix((root / "predictor_x.csv").string(), px);
        write_matrix((root / "predictor_values.csv").string(), py);
        files["predictor_x"] = "predictor_x.csv";
        files["predictor_values"] = "predictor_values.csv";
        pred = {{"mode", "precomputed"}};
    }

    json manifest;
    manifest["format"] = "ksos-model";
    manifest["format_version"] = 1;
    manifest["library_version"] = version();
    manifest["config"] = to_json(cfg);
    manifest["kernel_low"] = kernel_json(bm.kernel_low);
    manifest["kernel_up"] = kernel_json(bm.kernel_up);
    manifest["predictor"] = pred;
    manifest["normalization"] = to_json(bm.normalization);
    manifest["hyper"] = {{"b", bm.hyper.b},
                         {"reg_low", reg_json(bm.hyper.reg_low)},
                         {"reg_up", reg_json(bm.hyper.reg_up)},
                         {"penalty", penalty_json(bm.hyper.penalty)}};
    manifest["effective"] = {{"b", bm.b_effective},
                             {"reg_low", reg_json(bm.reg_low_effective)},
                             {"reg_up", reg_json(bm.reg_up_effective)}};
    manifest["calibration"] = fitted.calibration ? to_json(*fitted.calibration) : json(nullptr);
    manifest["tune"] = fitted.tuned ? to_json(*fitted.tuned) : json(nullptr);
    manifest["files"] = files;
    write_text((root / "manifest.json").string(), manifest.dump(2) + "\n");

    json report{{"version", version()}, {"solve", to_json(bm.report)}};
    write_text((root / "report.json").string(), report.dump(2) + "\n");
}

// --- entry point -------------------------------------------------------------

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
    setup_logging();
    CLI::App app{"Conformal prediction bands from kernel sum-of-squares models", "ksos"};
    app.set_version_flag("--version", std::string(version()));
    app.require_subcommand(1);

    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::optional<int> case_id, dim;
    std::optional<Index> n;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", seed, "Root seed (overrides the config)");
        sub->add_option("--out", out, "Output path");
        sub->add_option("--threads", threads, "Worker threads (benchmark)");
    };
    auto* gen = app.add_subcommand("generate", "Draw a synthetic dataset to CSV");
    common(gen);
    gen->add_option("--case", case_id, "Synthetic case 1-6");
    gen->add_option("--n", n, "Number of rows");
    gen->add_option("--dim", dim, "Input dimension (cases 2 and 6)");
    auto* fit = app.add_subcommand("fit", "Fit and calibrate bands; write a model archive");
    common(fit);
    auto* tun = app.add_subcommand("tune", "Cross-validated HSIC hyperparameter search");
    common(tun);
    auto* eva = app.add_subcommand("evaluate", "Coverage, width, ACG and WSC on the test block");
    common(eva);
    auto* ben = app.add_subcommand("benchmark", "Multi-seed λ sweeps");
    common(ben);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        RunConfig cfg = config_path.empty() ? parse_config(json::object()) : load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (*gen) return cmd_generate(cfg, case_id, n, dim, out);
        if (*fit) return cmd_fit(cfg, out);
        if (*tun) return cmd_tune(cfg, out);
        if (*eva) return cmd_evaluate(cfg, out);
        if (*ben) return cmd_benchmark(cfg, out, threads);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return kConfigError;
    } catch (const ParameterError& e) {
        spdlog::error("{}", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kNumericalError;
    }
    return kConfigError;
}

}  // namespace ksos::cli
