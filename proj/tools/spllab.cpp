// spllab: fold sampling, training, benchmarks, sweeps, comparisons and
// calibration for pseudo-label style losses on synthetic data.

#include "spl/errors.hpp"
#include "spl/experiment.hpp"
#include "spl/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace spl;

namespace {

// Usage problems found after CLI11 is done parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config;
    std::string out;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> fold_seed;
    std::optional<std::uint64_t> train_seed;
    int jobs = 1;
};

std::string default_out_dir() {
    const char* env = std::getenv("SPL_OUT_DIR");
    return env && *env ? env : "out";
}

RunConfig load_config(const Common& c, bool required) {
    if (required && c.config.empty()) throw UsageError("--config is required");
    json doc = json::object();
    if (!c.config.empty()) {
        try {
            doc = load_json(c.config);
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
    }
    try {
        for (const auto& o : c.overrides) apply_override(doc, o);
        RunConfig cfg = run_config_from_json(doc);
        if (c.fold_seed) cfg.fold.seed = *c.fold_seed;
        if (c.train_seed) cfg.train_seed = *c.train_seed;
        cfg.validate();
        return cfg;
    } catch (const InputError& e) {
        throw UsageError(e.what());
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad config: ") + e.what());
    }
}

VariantSpec variant_spec(const std::string& name, const LossConfig& base) {
    VariantSpec v{name, base, false};
    if (name == "sup" || name == "supervised") {
        v.loss.lambda_u = 0.0;
        v.loss.lambda_phi = 0.0;
        v.supervised_only = true;
        return v;
    }
    try {
        v.loss.variant = parse_variant(name);
    } catch (const InputError& e) {
        throw UsageError(e.what());
    }
    return v;
}

RunConfig with_variant(RunConfig cfg, const VariantSpec& v) {
    cfg.loss = v.loss;
    cfg.supervised_only = v.supervised_only;
    return cfg;
}

std::vector<FoldSpec> fold_range(const RunConfig& cfg, std::uint64_t first, int count) {
    const Dataset ds = build_dataset(cfg.dataset);
    std::vector<FoldSpec> folds;
    for (int i = 0; i < count; ++i) {
        FoldConfig fc = cfg.fold;
        fc.seed = first + static_cast<std::uint64_t>(i);
        folds.push_back(build_fold(fc, ds));
    }
    return folds;
}

std::string fold_name(std::uint64_t seed) { return "fold_" + std::to_string(seed) + ".json"; }

void report(const RunResult& r) {
    if (r.failure) {
        std::fprintf(stderr, "run failed at step %lld: %s\n", static_cast<long long>(r.failure->step),
                     r.failure->message.c_str());
        return;
    }
    std::printf("last_error %.4f best_error %.4f (step %lld) config %s\n", r.last_error.value_or(-1.0),
                r.best_error.value_or(-1.0), static_cast<long long>(r.best_step), r.config_hash.c_str());
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("bad sweep value '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError("--values is empty");
    return out;
}

// A comparison operand is a column document, or a benchmark table plus a column name.
void read_column(const std::string& arg, const std::optional<BenchmarkTable>& table, std::string& name,
                 std::vector<std::uint64_t>& folds, std::vector<double>& errors) {
    json j;
    if (table) {
        j = column_json(*table, arg);
    } else {
        try {
            j = load_json(arg);
        } catch (const IoError& e) {
            throw UsageError(e.what());
        }
    }
    if (kind_of(j) == "run_result") {
        const RunResult r = run_result_from_json(j);
        if (!r.last_error) throw InputError(arg + " is a failed run");
        name = arg;
        folds = {r.config.fold.seed};
        errors = {*r.last_error};
        return;
    }
    column_from_json(j, name, folds, errors);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pseudo-label loss laboratory"};
    app.require_subcommand(1);

    Common common;
    common.out = default_out_dir();
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", common.config, "JSON run config");
        if (config_required) opt->required();
        sub->add_option("--out", common.out, "output directory (default $SPL_OUT_DIR or ./out)");
        sub->add_option("--set", common.overrides, "dotted override key=value, repeatable");
        sub->add_option("--fold-seed", common.fold_seed, "fold seed");
        sub->add_option("--train-seed", common.train_seed, "training seed");
        sub->add_option("--jobs", common.jobs, "parallel runs")->check(CLI::PositiveNumber);
    };

    // sample-folds
    auto* sample = app.add_subcommand("sample-folds", "write FoldSpec files");
    add_common(sample, false);
    std::string protocol;
    std::optional<int> n_labels;
    std::optional<int> per_class;
    int n_folds = 6;
    sample->add_option("--protocol", protocol, "balanced, random or imbalanced");
    sample->add_option("--n-labels", n_labels, "labels per fold (random protocol)");
    sample->add_option("--per-class", per_class, "labels per class (balanced protocol)");
    sample->add_option("--folds", n_folds, "number of folds")->check(CLI::PositiveNumber);

    // train
    auto* train = app.add_subcommand("train", "one training run");
    add_common(train, true);
    std::string variant;
    std::string fold_path;
    train->add_option("--variant", variant, "pl, spl, fm, sfm or sup");
    train->add_option("--fold", fold_path, "FoldSpec file to train on");

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "folds x variants table");
    add_common(bench, true);
    std::vector<std::string> variants;
    int bench_folds = 6;
    bench->add_option("--variant", variants, "variants to run (default fm sfm sup)");
    bench->add_option("--folds", bench_folds, "number of fold seeds")->check(CLI::PositiveNumber);

    // sweep
    auto* sw = app.add_subcommand("sweep", "vary one setting");
    add_common(sw, true);
    std::string axis;
    std::string values;
    std::string sweep_variant;
    sw->add_option("--axis", axis, "tau, mu, beta, train_seed, n_labels or keep_fraction")->required();
    sw->add_option("--values", values, "comma-separated values")->required();
    sw->add_option("--variant", sweep_variant, "variant (default from config)");

    // compare
    auto* cmp = app.add_subcommand("compare", "paired gains and one-sided Wilcoxon test");
    cmp->add_option("--out", common.out, "output directory");
    std::string baseline;
    std::string method;
    std::string table_path;
    cmp->add_option("--baseline", baseline, "column file, or column name with --table")->required();
    cmp->add_option("--method", method, "column file, or column name with --table")->required();
    cmp->add_option("--table", table_path, "benchmark table");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "equilibrium-loss calibration of lambda_u");
    add_common(cal, true);

    // export-plots
    auto* exp = app.add_subcommand("export-plots", "CSV for plotting from result documents");
    exp->add_option("--out", common.out, "output directory");
    std::vector<std::string> inputs;
    exp->add_option("inputs", inputs, "result, benchmark, sweep or comparison files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const fs::path out = common.out;
    try {
        if (*sample) {
            RunConfig cfg = load_config(common, false);
            if (!protocol.empty()) {
                try {
                    cfg.fold.protocol = parse_protocol(protocol);
                } catch (const InputError& e) {
                    throw UsageError(e.what());
                }
            }
            if (n_labels) {
                cfg.fold.n_labels = *n_labels;
                if (protocol.empty()) cfg.fold.protocol = Protocol::random;
            }
            if (per_class) cfg.fold.per_class = *per_class;
            const std::uint64_t first = common.fold_seed.value_or(0);
            for (const auto& f : fold_range(cfg, first, n_folds)) {
                persist(f, out / fold_name(f.seed));
                std::printf("%s\n", (out / fold_name(f.seed)).string().c_str());
            }
        } else if (*train) {
            RunConfig cfg = load_config(common, true);
            if (!variant.empty()) cfg = with_variant(cfg, variant_spec(variant, cfg.loss));
            if (!fold_path.empty()) cfg.fold.path = fold_path;
            const RunResult r = run_training(cfg);
            persist(build_fold(cfg.fold, build_dataset(cfg.dataset)), out / "fold.json");
            persist(r, out / "result.json");
            write_text(checkpoint_csv(r), out / "checkpoints.csv");
            report(r);
            if (r.failure) return 2;
        } else if (*bench) {
            const RunConfig cfg = load_config(common, true);
            if (variants.empty()) variants = {"fm", "sfm", "sup"};
            std::vector<VariantSpec> specs;
            for (const auto& v : variants) specs.push_back(variant_spec(v, cfg.loss));
            const auto folds = fold_range(cfg, common.fold_seed.value_or(0), bench_folds);
            const BenchmarkTable t = run_benchmark(cfg, folds, specs, common.jobs);
            persist(t, out / "benchmark.json");
            write_text(benchmark_csv(t), out / "benchmark.csv");
            for (const auto& v : specs) save_json(column_json(t, v.name), out / ("column_" + v.name + ".json"));
            std::fputs(benchmark_csv(t).c_str(), stdout);
        } else if (*sw) {
            RunConfig cfg = load_config(common, true);
            if (!sweep_variant.empty()) cfg = with_variant(cfg, variant_spec(sweep_variant, cfg.loss));
            SweepAxis ax;
            try {
                ax = parse_sweep_axis(axis);
            } catch (const InputError& e) {
                throw UsageError(e.what());
            }
            const SweepTable t = sweep(cfg, ax, parse_values(values), common.jobs);
            persist(t, out / "sweep.json");
            write_text(sweep_csv(t), out / "sweep.csv");
            std::fputs(sweep_csv(t).c_str(), stdout);
        } else if (*cmp) {
            std::optional<BenchmarkTable> table;
            if (!table_path.empty()) {
                try {
                    table = load_benchmark(table_path);
                } catch (const IoError& e) {
                    throw UsageError(e.what());
                }
            }
            std::string bname, mname;
            std::vector<std::uint64_t> bfolds, mfolds;
            std::vector<double> berr, merr;
            read_column(baseline, table, bname, bfolds, berr);
            read_column(method, table, mname, mfolds, merr);
            if (bfolds != mfolds) throw InputError("baseline and method were run on different folds");
            const ComparisonReport r = compare_errors(bname, mname, bfolds, berr, merr);
            persist(r, out / "comparison.json");
            write_text(comparison_csv(r), out / "comparison.csv");
            std::fputs(comparison_csv(r).c_str(), stdout);
        } else if (*cal) {
            const RunConfig cfg = load_config(common, true);
            const CalibrationReport r = calibrate(cfg);
            persist(r, out / "calibration.json");
            std::printf("lambda_u %.6g lambda_phi_bound %.6g\n", r.lambda_u_sfm, r.lambda_phi_bound);
        } else if (*exp) {
            for (const auto& in : inputs) {
                json j;
                try {
                    j = load_json(in);
                } catch (const IoError& e) {
                    throw UsageError(e.what());
                }
                const std::string kind = kind_of(j);
                const fs::path target = out / (fs::path(in).stem().string() + ".csv");
                if (kind == "run_result")
                    write_text(checkpoint_csv(run_result_from_json(j)), target);
                else if (kind == "benchmark")
                    write_text(benchmark_csv(benchmark_from_json(j)), target);
                else if (kind == "sweep")
                    write_text(sweep_csv(sweep_from_json(j)), target);
                else if (kind == "comparison")
                    write_text(comparison_csv(comparison_from_json(j)), target);
                else
                    throw UsageError(in + ": nothing to export from a '" + kind + "' document");
                std::printf("%s\n", target.string().c_str());
            }
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.get_subcommands().front()->help().c_str());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
