#pragma once

// JSON documents and CSV exports. Every persisted document carries a "kind"
// field so tools can tell a fold from a run result without guessing.

#include "spl/experiment.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace spl {

using json = nlohmann::json;

json to_json(const FoldSpec& f);
FoldSpec fold_from_json(const json& j);

json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const json& j);

json to_json(const RunConfig& c);
// Starts from the defaults and applies `j` on top. Unknown keys throw InputError.
RunConfig run_config_from_json(const json& j);
json default_config_json();

// Applies "a.b.c=value" on top of a config document. The value is read as JSON
// when it parses (numbers, booleans, arrays), as a string otherwise. The path
// must exist in the default config.
void apply_override(json& config, const std::string& assignment);

json to_json(const RunResult& r);
RunResult run_result_from_json(const json& j);

json to_json(const BenchmarkTable& t);
BenchmarkTable benchmark_from_json(const json& j);

json to_json(const ComparisonReport& r);
ComparisonReport comparison_from_json(const json& j);

json to_json(const SweepTable& t);
SweepTable sweep_from_json(const json& j);

json to_json(const CalibrationReport& r);
CalibrationReport calibration_from_json(const json& j);

// One column of a benchmark: the headline error per fold for one variant.
json column_json(const BenchmarkTable& t, const std::string& variant);
// Reads a column document back as (fold seeds, errors).
void column_from_json(const json& j, std::string& name, std::vector<std::uint64_t>& folds,
                      std::vector<double>& errors);

std::string dump(const json& j);  // canonical text: 2-space indent, trailing newline
void save_json(const json& j, const std::filesystem::path& path);
json load_json(const std::filesystem::path& path);  // IoError / ParseError
std::string kind_of(const json& j);

template <typename T>
void persist(const T& value, const std::filesystem::path& path) {
    save_json(to_json(value), path);
}

FoldSpec load_fold(const std::filesystem::path& path);
RunResult load_run_result(const std::filesystem::path& path);
BenchmarkTable load_benchmark(const std::filesystem::path& path);
SweepTable load_sweep(const std::filesystem::path& path);
ComparisonReport load_comparison(const std::filesystem::path& path);

// --- CSV --------------------------------------------------------------------

// fold,baseline,method,gain rows in percent, then a mean+-std row and the p-value.
std::string comparison_csv(const ComparisonReport& r);
// Fold rows, one column per variant; then mean, std, max, min, range rows.
std::string benchmark_csv(const BenchmarkTable& t);
// x,last_error,best_error,collapsed
std::string sweep_csv(const SweepTable& t);
// step,test_error,coverage,purity,mean_weight
std::string checkpoint_csv(const RunResult& r);

void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace spl
