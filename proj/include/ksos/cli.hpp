// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/bands.hpp"
#include "ksos/conformal.hpp"
#include "ksos/datasets.hpp"
#include "ksos/metrics.hpp"
#include "ksos/predictor.hpp"
#include "ksos/tuning.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ksos::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalError = 3 };

struct DataConfig {
    std::optional<int> case_id;  ///< synthetic generator
    int dim = 1;
    Index n = 0;  ///< 0: pretrain + calibration + test
    std::string csv;
};

struct SplitConfig {
    Index pretrain = 100;
    Index calibration = 2000;
    Index test = 1000;
};

struct PredictorConfig {
    std::optional<double> lengthscale;
    std::optional<double> noise;
    bool use_column = true;  ///< use the CSV m_hat column when present
};

struct MetricsConfig {
    Index n_x = 100;
    Index n_y = 1000;
    Index wsc_regions = 10;
    Index wsc_size = 100;
};

struct BenchmarkConfig {
    std::vector<std::uint64_t> seeds;
    std::vector<double> lambda_grid;
    std::string start = "warm";  ///< warm, cold or both
    std::vector<std::string> methods{"ksos"};
    bool tune = false;  ///< also record the tuner's λ choice per seed
};

/// Everything a command may read from the JSON config. Unknown keys are
/// rejected at parse time.
struct RunConfig {
    DataConfig data;
    SplitConfig split;
    double alpha = 0.1;
    std::optional<double> b;  ///< default: 0 for case 6, otherwise 10
    PenaltyKind penalty = PenaltyKind::TrainSet;
    double lambda = 1.0;
    std::optional<double> theta_low;
    std::optional<double> theta_up;
    RegParams reg_low;
    RegParams reg_up;
    bool normalize = true;
    CalibrationMode calibration = CalibrationMode::Symmetric;
    std::optional<double> alpha_low;
    double jitter = 0.0;
    PredictorConfig predictor;
    SolverOptions solver;
    TuneConfig tune;
    bool use_tuned = false;  ///< fit/evaluate run the tuner first
    MetricsConfig metrics;
    std::string method = "ksos";  ///< ksos, oracle or whole_line
    BenchmarkConfig benchmark;
    std::uint64_t seed = 0;

    double b_value() const;
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json to_json(const TuneResult& t);
nlohmann::json to_json(const SolveReport& r);
nlohmann::json to_json(const CalibrationResult& c);
nlohmann::json to_json(const NormalizationRecord& n);

/// Tuner settings implied by a run config (b, penalty, weights, solver) for one seed.
TuneConfig tune_config(const RunConfig& cfg, std::uint64_t seed);

/// Data, split and mean model for one seed.
struct Prepared {
    Dataset data;
    Split split;
    Predictor predictor;
    std::optional<SyntheticCase> synthetic;
};

Prepared prepare(const RunConfig& cfg, std::uint64_t seed);

struct Fitted {
    BandModel model;
    std::optional<CalibrationResult> calibration;
    std::optional<TuneResult> tuned;
};

/// Normalization, optional tuning, band fit on the pre-training block and
/// calibration on the calibration block (skipped when it is empty).
Fitted fit_pipeline(const RunConfig& cfg, const Prepared& prep);

/// Interval function for a method name: ksos needs `fitted`, oracle needs a
/// synthetic case, whole_line needs nothing.
IntervalFn interval_method(const std::string& method, const RunConfig& cfg, const Prepared& prep,
                           const Fitted* fitted);

/// Writes the model archive: manifest.json plus CSV matrices.
void write_archive(const std::string& dir, const RunConfig& cfg, const Fitted& fitted);

/// Entry point shared by the executable and the tests; returns the exit code.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace ksos::cli
