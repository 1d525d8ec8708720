#pragma once

// Training runs, multi-fold benchmarks, ablation sweeps and weight calibration.

#include "spl/data.hpp"
#include "spl/diffcore.hpp"
#include "spl/losses.hpp"
#include "spl/metrics.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace spl {

inline constexpr std::uint64_t kDefaultTrainSeed = 2046;

struct DatasetConfig {
    std::string kind = "blobs";  // "blobs" or "two_moons"
    int n = 2000;
    int n_classes = 10;  // blobs only
    double spread = 0.25;  // blobs only
    double noise = 0.1;  // two_moons only
    int dim = 2;         // blobs only
    std::uint64_t seed = 0;

    bool operator==(const DatasetConfig&) const = default;
};

struct FoldConfig {
    Protocol protocol = Protocol::balanced;
    int per_class = 4;   // balanced
    int n_labels = 40;   // random
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    bool imbalance = false;
    double keep_fraction = 0.6;
    int imbalance_class = -1;  // -1: drawn from the fold seed
    std::string path;          // load the fold from this file instead of sampling
    std::optional<FoldSpec> spec;  // explicit fold; wins over path and sampling

    bool operator==(const FoldConfig&) const = default;
};

struct ModelConfig {
    std::vector<std::size_t> hidden{64, 64};
    Activation activation = Activation::relu;

    bool operator==(const ModelConfig&) const = default;
};

enum class EvalSource { raw, ema };

struct RunConfig {
    DatasetConfig dataset;
    FoldConfig fold;
    ModelConfig model;
    LossConfig loss;
    OptimConfig optim;  // optim.total_steps is overwritten by total_steps
    AugmentSettings augment;
    int batch_labeled = 8;
    int ratio = 7;
    std::int64_t total_steps = 20000;
    std::int64_t eval_interval = 500;
    std::uint64_t train_seed = kDefaultTrainSeed;
    EvalSource eval_source = EvalSource::ema;
    // Skip the unlabeled side entirely (no unlabeled batches are drawn).
    bool supervised_only = false;

    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

Dataset build_dataset(const DatasetConfig& cfg);
// Resolves explicit spec, then path, then sampling, then applies imbalance.
FoldSpec build_fold(const FoldConfig& cfg, const Dataset& ds);

struct Checkpoint {
    std::int64_t step = 0;
    double test_error = 0.0;
    double coverage = 0.0;
    std::optional<double> purity;
    double mean_weight = 0.0;
    int accepted = 0;
    std::uint64_t acceptance_fingerprint = 0;
    std::vector<int> collapsed;
    // Means over the steps since the previous checkpoint.
    double loss_sup = 0.0;
    double loss_unsup = 0.0;
    double loss_phi = 0.0;

    bool operator==(const Checkpoint&) const = default;
};

struct RunFailure {
    std::int64_t step = 0;
    std::string message;
    std::uint64_t batch_fingerprint = 0;

    bool operator==(const RunFailure&) const = default;
};

struct RunResult {
    std::string config_hash;
    RunConfig config;
    std::vector<Checkpoint> checkpoints;
    ConfusionMatrix final_confusion;
    // Headline: error of the last checkpoint. Empty when the run aborted.
    std::optional<double> last_error;
    std::optional<double> best_error;
    std::int64_t best_step = 0;
    std::optional<RunFailure> failure;
    // Not persisted and ignored by ==, so identical runs serialize identically.
    double wall_clock_seconds = 0.0;

    bool operator==(const RunResult& o) const {
        return config_hash == o.config_hash && config == o.config && checkpoints == o.checkpoints &&
               final_confusion == o.final_confusion && last_error == o.last_error &&
               best_error == o.best_error && best_step == o.best_step && failure == o.failure;
    }
};

struct StepInfo {
    std::int64_t step = 0;  // optimizer steps completed, 1-based
    double supervised = 0.0;
    double unsupervised = 0.0;
    double factor_loss = 0.0;
    double mean_weight = 0.0;
};

struct RunHooks {
    std::function<void(const StepInfo&)> on_step;
    // Pseudo-labels of the whole unlabeled set under the raw parameters.
    std::function<void(const Checkpoint&, const std::vector<PseudoLabel>&)> on_checkpoint;
    // Raw and EMA parameters once the loop ends (also after a failure).
    std::function<void(const ModelParams&, const ModelParams&)> on_finish;
    // Stop after this many steps (checkpoints still follow eval_interval). -1: run to the end.
    std::int64_t stop_after = -1;
};

// Deterministic: identical configs give identical results (wall clock aside).
// A non-finite loss ends the run early with `failure` filled in.
RunResult run_training(const RunConfig& cfg, const RunHooks& hooks = {});

// FNV-1a over the canonical JSON dump of the config.
std::string config_hash(const RunConfig& cfg);
std::uint64_t fnv1a(std::string_view bytes);

// --- benchmarks -------------------------------------------------------------

struct VariantSpec {
    std::string name;
    LossConfig loss;
    bool supervised_only = false;

    bool operator==(const VariantSpec&) const = default;
};

struct BenchmarkCell {
    std::optional<RunResult> result;
    std::optional<std::string> error;  // set when the run threw

    std::optional<double> headline() const;
    bool operator==(const BenchmarkCell&) const = default;
};

struct ColumnSummary {
    int n_ok = 0;
    std::optional<double> mean;
    std::optional<double> std;
    std::optional<double> max;
    std::optional<double> min;
    std::optional<double> range;

    bool operator==(const ColumnSummary&) const = default;
};

struct BenchmarkTable {
    std::vector<std::uint64_t> fold_seeds;  // row keys
    std::vector<VariantSpec> variants;      // column keys
    std::vector<std::vector<BenchmarkCell>> cells;  // [fold][variant]
    std::vector<ColumnSummary> summary;             // per variant

    int column(const std::string& name) const;  // -1 when absent
    bool operator==(const BenchmarkTable&) const = default;
};

ColumnSummary summarize(const std::vector<std::optional<double>>& values);

// Runs every (fold, variant) pair, up to `jobs` at a time. A failing cell is
// recorded in place and does not stop its siblings.
BenchmarkTable run_benchmark(const RunConfig& base, const std::vector<FoldSpec>& folds,
                             const std::vector<VariantSpec>& variants, int jobs = 1);

struct ComparisonReport {
    std::string baseline;
    std::string method;
    std::vector<std::uint64_t> folds;
    std::vector<double> baseline_errors;
    std::vector<double> method_errors;
    GainSummary gain;
    WilcoxonOutcome wilcoxon;

    bool operator==(const ComparisonReport&) const = default;
};

// Gains baseline - method per fold and a one-sided test that the method has
// the lower error.
ComparisonReport compare_methods(const BenchmarkTable& table, const std::string& baseline,
                                 const std::string& method);
ComparisonReport compare_errors(const std::string& baseline, const std::string& method,
                                const std::vector<std::uint64_t>& folds, const std::vector<double>& baseline_errors,
                                const std::vector<double>& method_errors);

// --- calibration ------------------------------------------------------------

struct CalibrationReport {
    EquilibriumEstimate estimate;
    double lambda_u_fm = 1.0;
    double lambda_u_sfm = 1.0;
    double lambda_phi_bound = 0.0;
    LossConfig calibrated;

    bool operator==(const CalibrationReport&) const = default;
};

// Equilibrium window as fractions of the step budget.
inline constexpr double kCalibrationWindowStart = 0.05;
inline constexpr double kCalibrationWindowEnd = 0.10;

// Two pilot runs (FM and SFM, lambda_phi = 0) up to the end of the window.
CalibrationReport calibrate(const RunConfig& base);

// --- sweeps -----------------------------------------------------------------

enum class SweepAxis { tau, mu, beta, train_seed, n_labels, keep_fraction };

std::string to_string(SweepAxis a);
SweepAxis parse_sweep_axis(const std::string& name);

RunConfig with_axis_value(const RunConfig& base, SweepAxis axis, double value);

struct SweepRow {
    double value = 0.0;
    std::optional<double> last_error;
    std::optional<double> best_error;
    std::vector<int> collapsed;
    std::optional<std::string> error;

    bool operator==(const SweepRow&) const = default;
};

struct SweepTable {
    SweepAxis axis = SweepAxis::tau;
    std::string variant;
    std::vector<SweepRow> rows;

    bool operator==(const SweepTable&) const = default;
};

SweepTable sweep(const RunConfig& base, SweepAxis axis, const std::vector<double>& values, int jobs = 1);

// Fraction of consecutive rows where the headline error went up.
double worsening_fraction(const SweepTable& table);

}  // namespace spl
