#include "spl/experiment.hpp"

#include "spl/errors.hpp"
#include "spl/serialize.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <thread>

namespace spl {

// --- config -----------------------------------------------------------------

void RunConfig::validate() const {
    loss.validate();
    OptimConfig o = optim;
    o.total_steps = total_steps;
    o.validate();
    if (batch_labeled < 1) throw InputError("batch_labeled must be >= 1");
    if (ratio < 1) throw InputError("ratio must be >= 1");
    if (total_steps < 1) throw InputError("total_steps must be >= 1");
    if (eval_interval < 1) throw InputError("eval_interval must be >= 1");
    if (dataset.kind != "blobs" && dataset.kind != "two_moons")
        throw InputError("dataset.kind must be blobs or two_moons");
    for (auto h : model.hidden)
        if (h == 0) throw InputError("hidden widths must be positive");
}

Dataset build_dataset(const DatasetConfig& cfg) {
    if (cfg.kind == "blobs") return gen_blobs(cfg.n, cfg.n_classes, cfg.spread, cfg.seed, cfg.dim);
    if (cfg.kind == "two_moons") return gen_two_moons(cfg.n, cfg.noise, cfg.seed);
    throw InputError("unknown dataset kind '" + cfg.kind + "'");
}

FoldSpec build_fold(const FoldConfig& cfg, const Dataset& ds) {
    if (cfg.spec) return *cfg.spec;
    if (!cfg.path.empty()) return load_fold(cfg.path);
    FoldSpec f = cfg.protocol == Protocol::random
                     ? sample_fold_random(ds, cfg.n_labels, cfg.seed, cfg.test_fraction)
                     : sample_fold_balanced(ds, cfg.per_class, cfg.seed, cfg.test_fraction);
    if (cfg.imbalance || cfg.protocol == Protocol::imbalanced) {
        std::optional<int> target;
        if (cfg.imbalance_class >= 0) target = cfg.imbalance_class;
        f = apply_imbalance(f, ds, cfg.seed, cfg.keep_fraction, target);
    }
    return f;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const RunConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(cfg).dump())));
    return buf;
}

// --- training ---------------------------------------------------------------

namespace {

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, best)) best = c;
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

std::uint64_t batch_fingerprint(const Batch& b) {
    std::string bytes;
    auto add_ids = [&](const std::vector<int>& ids) {
        for (int i : ids) bytes.append(reinterpret_cast<const char*>(&i), sizeof i);
    };
    add_ids(b.labeled_ids);
    add_ids(b.unlabeled_ids);
    return fnv1a(bytes);
}

struct LossAccumulator {
    double sup = 0.0;
    double unsup = 0.0;
    double phi = 0.0;
    std::int64_t n = 0;

    void add(const BatchLoss& l) {
        sup += l.supervised;
        unsup += l.unsupervised;
        phi += l.factor_loss;
        ++n;
    }
};

}  // namespace

RunResult run_training(const RunConfig& cfg, const RunHooks& hooks) {
    const auto started = std::chrono::steady_clock::now();
    cfg.validate();

    RunResult result;
    result.config = cfg;
    result.config_hash = config_hash(cfg);

    const Dataset ds = build_dataset(cfg.dataset);
    const FoldSpec fold = build_fold(cfg.fold, ds);
    const TrainingView view(ds, fold);
    if (fold.test.empty()) throw InputError("fold has no test items");

    std::vector<std::size_t> sizes{static_cast<std::size_t>(ds.dim())};
    sizes.insert(sizes.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
    sizes.push_back(static_cast<std::size_t>(ds.n_classes));
    auto init_rng = make_rng(cfg.train_seed, 21);
    ModelParams params = init_he_uniform(sizes, cfg.model.activation, init_rng);

    OptimConfig ocfg = cfg.optim;
    ocfg.total_steps = cfg.total_steps;
    OptimState state = OptimState::init(params, ocfg);

    BatchIterator batches(view, cfg.batch_labeled, cfg.ratio, cfg.train_seed,
                          AugmentParams::for_dataset(ds, cfg.augment), !cfg.supervised_only);

    Matrix test_x(static_cast<Eigen::Index>(fold.test.size()), ds.dim());
    std::vector<int> test_y;
    for (std::size_t i = 0; i < fold.test.size(); ++i) {
        test_x.row(static_cast<Eigen::Index>(i)) = ds.points.row(fold.test[i]);
        test_y.push_back(ds.labels[static_cast<std::size_t>(fold.test[i])]);
    }
    // Ground truth of U is read here for reporting only.
    std::vector<int> unlabeled_gt;
    for (int i : fold.unlabeled) unlabeled_gt.push_back(ds.labels[static_cast<std::size_t>(i)]);

    const std::int64_t last_step = hooks.stop_after >= 0 ? std::min(hooks.stop_after, cfg.total_steps) : cfg.total_steps;
    LossAccumulator acc;

    auto checkpoint = [&](std::int64_t step) {
        Checkpoint c;
        c.step = step;
        const ModelParams& eval = cfg.eval_source == EvalSource::ema ? state.ema : params;
        const auto preds = argmax_rows(mlp_forward(eval, test_x));
        result.final_confusion = confusion(preds, test_y, ds.n_classes);
        c.test_error = error_rate(result.final_confusion);
        const auto collapsed = collapsed_classes(result.final_confusion);
        c.collapsed.assign(collapsed.begin(), collapsed.end());

        std::vector<PseudoLabel> labels;
        if (view.unlabeled_points().rows() > 0) {
            const Matrix probs = softmax_rows(mlp_forward(params, view.unlabeled_points()));
            labels.reserve(static_cast<std::size_t>(probs.rows()));
            std::vector<double> row(static_cast<std::size_t>(probs.cols()));
            for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                for (Eigen::Index k = 0; k < probs.cols(); ++k) row[static_cast<std::size_t>(k)] = probs(r, k);
                labels.push_back(pseudo_label(row, cfg.loss));
            }
            const auto stats = pseudo_label_stats(labels, unlabeled_gt);
            c.coverage = stats.coverage;
            c.purity = stats.purity;
            c.mean_weight = stats.mean_weight;
            std::string bytes;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i].weight > 0.0) {
                    ++c.accepted;
                    const int id = fold.unlabeled[i];
                    bytes.append(reinterpret_cast<const char*>(&id), sizeof id);
                }
            }
            c.acceptance_fingerprint = fnv1a(bytes);
        }
        if (acc.n > 0) {
            c.loss_sup = acc.sup / static_cast<double>(acc.n);
            c.loss_unsup = acc.unsup / static_cast<double>(acc.n);
            c.loss_phi = acc.phi / static_cast<double>(acc.n);
        }
        acc = {};
        if (!result.best_error || c.test_error < *result.best_error) {
            result.best_error = c.test_error;
            result.best_step = step;
        }
        result.last_error = c.test_error;
        if (hooks.on_checkpoint) hooks.on_checkpoint(c, labels);
        result.checkpoints.push_back(std::move(c));
    };

    for (std::int64_t step = 0; step < last_step; ++step) {
        const Batch batch = batches.next();
        Tape tape;
        const BoundParams bound = bind(tape, params);
        Var labeled_logits = mlp_forward(bound, tape.constant(batch.labeled));
        std::optional<Var> weak;
        std::optional<Var> strong;
        if (batch.unlabeled_size() > 0) {
            weak = mlp_forward(bound, tape.constant(batch.weak));
            if (cfg.loss.two_view()) strong = mlp_forward(bound, tape.constant(batch.strong));
        }
        const BatchLoss loss = batch_loss(tape, labeled_logits, batch.labels, weak, strong, cfg.loss);
        if (!std::isfinite(loss.total.scalar())) {
            result.failure = RunFailure{step, "non-finite loss", batch_fingerprint(batch)};
            result.last_error.reset();
            break;
        }
        const Gradients grads = backward(tape, loss.total, bound);
        try {
            sgd_step(params, grads, state);
        } catch (const TrainingFault& e) {
            result.failure = RunFailure{step, e.what(), batch_fingerprint(batch)};
            result.last_error.reset();
            break;
        }
        acc.add(loss);
        if (hooks.on_step)
            hooks.on_step({state.step, loss.supervised, loss.unsupervised, loss.factor_loss, loss.mean_weight});
        if (state.step % cfg.eval_interval == 0 || state.step == last_step) checkpoint(state.step);
    }

    if (hooks.on_finish) hooks.on_finish(params, state.ema);
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

// --- benchmarks -------------------------------------------------------------

std::optional<double> BenchmarkCell::headline() const {
    if (!result || result->failure) return std::nullopt;
    return result->last_error;
}

int BenchmarkTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < variants.size(); ++i)
        if (variants[i].name == name) return static_cast<int>(i);
    return -1;
}

ColumnSummary summarize(const std::vector<std::optional<double>>& values) {
    ColumnSummary s;
    std::vector<double> ok;
    for (const auto& v : values)
        if (v) ok.push_back(*v);
    s.n_ok = static_cast<int>(ok.size());
    if (ok.empty()) return s;
    const double k = static_cast<double>(ok.size());
    const double mean = std::accumulate(ok.begin(), ok.end(), 0.0) / k;
    s.mean = mean;
    if (ok.size() > 1) {
        double ss = 0.0;
        for (double x : ok) ss += (x - mean) * (x - mean);
        s.std = std::sqrt(ss / (k - 1.0));
    }
    s.max = *std::max_element(ok.begin(), ok.end());
    s.min = *std::min_element(ok.begin(), ok.end());
    s.range = *s.max - *s.min;
    return s;
}

namespace {

// Runs task(i) for i in [0, n) on up to `jobs` threads. Each task writes only its own slot.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
    const auto width = static_cast<std::size_t>(std::max(1, jobs));
    if (width == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < std::min(width, n); ++w)
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) task(i);
        });
}

}  // namespace

BenchmarkTable run_benchmark(const RunConfig& base, const std::vector<FoldSpec>& folds,
                             const std::vector<VariantSpec>& variants, int jobs) {
    if (folds.empty()) throw InputError("benchmark needs at least one fold");
    if (variants.empty()) throw InputError("benchmark needs at least one variant");
    BenchmarkTable t;
    t.variants = variants;
    for (const auto& f : folds) t.fold_seeds.push_back(f.seed);
    t.cells.assign(folds.size(), std::vector<BenchmarkCell>(variants.size()));

    const std::size_t nv = variants.size();
    parallel_for(folds.size() * nv, jobs, [&](std::size_t i) {
        const std::size_t f = i / nv;
        const std::size_t v = i % nv;
        BenchmarkCell& cell = t.cells[f][v];
        try {
            RunConfig cfg = base;
            cfg.loss = variants[v].loss;
            cfg.supervised_only = variants[v].supervised_only;
            cfg.fold.spec = folds[f];
            cell.result = run_training(cfg);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });

    for (std::size_t v = 0; v < nv; ++v) {
        std::vector<std::optional<double>> col;
        for (std::size_t f = 0; f < folds.size(); ++f) col.push_back(t.cells[f][v].headline());
        t.summary.push_back(summarize(col));
    }
    return t;
}

ComparisonReport compare_errors(const std::string& baseline, const std::string& method,
                                const std::vector<std::uint64_t>& folds, const std::vector<double>& baseline_errors,
                                const std::vector<double>& method_errors) {
    if (baseline_errors.size() != method_errors.size() || folds.size() != baseline_errors.size())
        throw InputError("compare: fold rows are not aligned");
    ComparisonReport r;
    r.baseline = baseline;
    r.method = method;
    r.folds = folds;
    r.baseline_errors = baseline_errors;
    r.method_errors = method_errors;
    r.gain = paired_gain(baseline_errors, method_errors);
    r.wilcoxon = wilcoxon_one_sided(r.gain.gains, Alternative::greater);
    return r;
}

ComparisonReport compare_methods(const BenchmarkTable& table, const std::string& baseline,
                                 const std::string& method) {
    const int b = table.column(baseline);
    const int m = table.column(method);
    if (b < 0) throw InputError("no column named '" + baseline + "'");
    if (m < 0) throw InputError("no column named '" + method + "'");
    std::vector<double> be;
    std::vector<double> me;
    for (std::size_t f = 0; f < table.cells.size(); ++f) {
        const auto x = table.cells[f][static_cast<std::size_t>(b)].headline();
        const auto y = table.cells[f][static_cast<std::size_t>(m)].headline();
        if (!x || !y)
            throw InputError("fold " + std::to_string(table.fold_seeds[f]) + " has a failed run; rows not aligned");
        be.push_back(*x);
        me.push_back(*y);
    }
    return compare_errors(baseline, method, table.fold_seeds, be, me);
}

// --- calibration ------------------------------------------------------------

CalibrationReport calibrate(const RunConfig& base) {
    const auto start = static_cast<std::int64_t>(std::floor(kCalibrationWindowStart * base.total_steps));
    const auto end = static_cast<std::int64_t>(std::ceil(kCalibrationWindowEnd * base.total_steps));
    if (end <= start) throw CalibrationError("calibration window is empty; increase total_steps");

    struct Window {
        double unsup = 0.0;
        double weight = 0.0;
        std::int64_t n = 0;
    };
    auto pilot = [&](Variant v) {
        RunConfig cfg = base;
        cfg.loss.variant = v;
        cfg.loss.lambda_phi = 0.0;
        cfg.supervised_only = false;
        Window w;
        RunHooks hooks;
        hooks.stop_after = end;
        hooks.on_step = [&](const StepInfo& s) {
            if (s.step > start && s.step <= end) {
                w.unsup += s.unsupervised;
                w.weight += s.mean_weight;
                ++w.n;
            }
        };
        const auto r = run_training(cfg, hooks);
        if (r.failure) throw CalibrationError("pilot run failed: " + r.failure->message);
        if (w.n == 0) throw CalibrationError("pilot run produced no steps in the window");
        return w;
    };

    const Window fm = pilot(Variant::fm);
    const Window sfm = pilot(Variant::sfm);

    CalibrationReport rep;
    rep.lambda_u_fm = base.loss.lambda_u;
    rep.estimate.window_start = start;
    rep.estimate.window_end = end;
    rep.estimate.loss_fm = fm.unsup / static_cast<double>(fm.n);
    rep.estimate.factor = sfm.weight / static_cast<double>(sfm.n);
    const double sfm_unsup = sfm.unsup / static_cast<double>(sfm.n);
    if (!(rep.estimate.factor > 0.0)) throw CalibrationError("SFM pilot never accepted a pseudo-label");
    rep.estimate.loss_sfm = sfm_unsup / rep.estimate.factor;
    if (!(rep.estimate.loss_fm > 0.0)) throw CalibrationError("FM pilot never accepted a pseudo-label");
    rep.lambda_u_sfm = calibrate_lambda_u(rep.estimate, rep.lambda_u_fm);
    rep.lambda_phi_bound = lambda_phi_bound(base.loss.tau, rep.lambda_u_sfm, rep.estimate.loss_sfm);
    rep.calibrated = base.loss;
    rep.calibrated.variant = Variant::sfm;
    rep.calibrated.lambda_u = rep.lambda_u_sfm;
    return rep;
}

// --- sweeps -----------------------------------------------------------------

std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::tau: return "tau";
        case SweepAxis::mu: return "mu";
        case SweepAxis::beta: return "beta";
        case SweepAxis::train_seed: return "train_seed";
        case SweepAxis::n_labels: return "n_labels";
        case SweepAxis::keep_fraction: return "keep_fraction";
    }
    return "?";
}

SweepAxis parse_sweep_axis(const std::string& name) {
    if (name == "tau") return SweepAxis::tau;
    if (name == "mu") return SweepAxis::mu;
    if (name == "beta") return SweepAxis::beta;
    if (name == "train_seed") return SweepAxis::train_seed;
    if (name == "n_labels") return SweepAxis::n_labels;
    if (name == "keep_fraction") return SweepAxis::keep_fraction;
    throw InputError("unknown sweep axis '" + name + "'");
}

RunConfig with_axis_value(const RunConfig& base, SweepAxis axis, double value) {
    RunConfig cfg = base;
    switch (axis) {
        case SweepAxis::tau: cfg.loss.tau = value; break;
        case SweepAxis::mu: cfg.loss.mu = value; break;
        case SweepAxis::beta: cfg.optim.momentum = value; break;
        case SweepAxis::train_seed:
            if (value < 0.0 || value != std::floor(value)) throw InputError("train_seed values must be whole numbers");
            cfg.train_seed = static_cast<std::uint64_t>(value);
            break;
        case SweepAxis::n_labels: {
            if (value < 1.0 || value != std::floor(value)) throw InputError("n_labels values must be whole numbers");
            const auto n = static_cast<int>(value);
            if (cfg.fold.spec || !cfg.fold.path.empty())
                throw InputError("n_labels sweep needs a sampled fold, not a fixed one");
            if (cfg.fold.protocol == Protocol::random) {
                cfg.fold.n_labels = n;
            } else {
                const int k = cfg.dataset.kind == "two_moons" ? 2 : cfg.dataset.n_classes;
                if (n % k != 0) throw InputError("balanced n_labels must be a multiple of the class count");
                cfg.fold.per_class = n / k;
            }
            break;
        }
        case SweepAxis::keep_fraction:
            cfg.fold.imbalance = true;
            cfg.fold.keep_fraction = value;
            break;
    }
    cfg.validate();
    return cfg;
}

SweepTable sweep(const RunConfig& base, SweepAxis axis, const std::vector<double>& values, int jobs) {
    if (values.empty()) throw InputError("sweep needs at least one value");
    SweepTable t;
    t.axis = axis;
    t.variant = to_string(base.loss.variant);
    t.rows.resize(values.size());
    // Reject bad values before spending time on any run.
    for (double v : values) (void)with_axis_value(base, axis, v);
    parallel_for(values.size(), jobs, [&](std::size_t i) {
        SweepRow& row = t.rows[i];
        row.value = values[i];
        try {
            const auto r = run_training(with_axis_value(base, axis, values[i]));
            if (r.failure) {
                row.error = r.failure->message + " at step " + std::to_string(r.failure->step);
            } else {
                row.last_error = r.last_error;
                row.best_error = r.best_error;
                if (!r.checkpoints.empty()) row.collapsed = r.checkpoints.back().collapsed;
            }
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });
    return t;
}

double worsening_fraction(const SweepTable& table) {
    int pairs = 0;
    int worse = 0;
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        const auto& a = table.rows[i - 1].last_error;
        const auto& b = table.rows[i].last_error;
        if (!a || !b) continue;
        ++pairs;
        if (*b > *a) ++worse;
    }
    return pairs == 0 ? 0.0 : static_cast<double>(worse) / pairs;
}

}  // namespace spl
