#include "spl/serialize.hpp"

#include "spl/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace spl {

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> get_opt(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw InputError("unknown activation '" + s + "'");
}

std::string schedule_name(Schedule s) { return s == Schedule::cosine ? "cosine" : "constant"; }

Schedule parse_schedule(const std::string& s) {
    if (s == "cosine") return Schedule::cosine;
    if (s == "constant") return Schedule::constant;
    throw InputError("unknown schedule '" + s + "'");
}

Alternative parse_alternative(const std::string& s) {
    if (s == "greater") return Alternative::greater;
    if (s == "less") return Alternative::less;
    if (s == "two_sided") return Alternative::two_sided;
    throw InputError("unknown alternative '" + s + "'");
}

void expect_kind(const json& j, const char* kind) {
    if (!j.is_object() || !j.contains("kind") || j.at("kind") != kind)
        throw ParseError(std::string("expected a '") + kind + "' document");
}

// Recursively lays `patch` over `base`, refusing keys the base does not have.
void merge_strict(json& base, const json& patch, const std::string& prefix) {
    if (!patch.is_object()) throw InputError("config section '" + prefix + "' must be an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw InputError("unknown config key '" + path + "'");
        json& slot = base[it.key()];
        if (slot.is_object() && it.value().is_object())
            merge_strict(slot, it.value(), path);
        else
            slot = it.value();
    }
}

json confusion_json(const ConfusionMatrix& cm) {
    json rows = json::array();
    for (int t = 0; t < cm.n_classes; ++t) {
        json row = json::array();
        for (int p = 0; p < cm.n_classes; ++p) row.push_back(cm.at(t, p));
        rows.push_back(std::move(row));
    }
    return {{"n_classes", cm.n_classes}, {"total", cm.total}, {"counts", rows}};
}

ConfusionMatrix confusion_from(const json& j) {
    ConfusionMatrix cm;
    cm.n_classes = j.at("n_classes").get<int>();
    cm.total = j.at("total").get<std::int64_t>();
    for (const auto& row : j.at("counts"))
        for (const auto& v : row) cm.counts.push_back(v.get<std::int64_t>());
    if (cm.counts.size() != static_cast<std::size_t>(cm.n_classes) * static_cast<std::size_t>(cm.n_classes))
        throw ParseError("confusion matrix has the wrong number of entries");
    return cm;
}

json gain_json(const GainSummary& g) {
    return {{"gains", g.gains}, {"mean", g.mean}, {"std", opt(g.std)},
            {"max", g.max},     {"min", g.min},   {"range", g.range}};
}

GainSummary gain_from(const json& j) {
    GainSummary g;
    g.gains = j.at("gains").get<std::vector<double>>();
    g.mean = j.at("mean").get<double>();
    g.std = get_opt(j, "std");
    g.max = j.at("max").get<double>();
    g.min = j.at("min").get<double>();
    g.range = j.at("range").get<double>();
    return g;
}

json wilcoxon_json(const WilcoxonOutcome& w) {
    return {{"n_effective", w.n_effective}, {"statistic", w.statistic},   {"p_value", w.p_value},
            {"alternative", to_string(w.alternative)}, {"zero_count", w.zero_count},
            {"tie_count", w.tie_count},     {"exact", w.exact},           {"degenerate", w.degenerate}};
}

WilcoxonOutcome wilcoxon_from(const json& j) {
    WilcoxonOutcome w;
    w.n_effective = j.at("n_effective").get<int>();
    w.statistic = j.at("statistic").get<double>();
    w.p_value = j.at("p_value").get<double>();
    w.alternative = parse_alternative(j.at("alternative").get<std::string>());
    w.zero_count = j.at("zero_count").get<int>();
    w.tie_count = j.at("tie_count").get<int>();
    w.exact = j.at("exact").get<bool>();
    w.degenerate = j.at("degenerate").get<bool>();
    return w;
}

json summary_json(const ColumnSummary& s) {
    return {{"n_ok", s.n_ok}, {"mean", opt(s.mean)}, {"std", opt(s.std)},
            {"max", opt(s.max)}, {"min", opt(s.min)}, {"range", opt(s.range)}};
}

ColumnSummary summary_from(const json& j) {
    ColumnSummary s;
    s.n_ok = j.at("n_ok").get<int>();
    s.mean = get_opt(j, "mean");
    s.std = get_opt(j, "std");
    s.max = get_opt(j, "max");
    s.min = get_opt(j, "min");
    s.range = get_opt(j, "range");
    return s;
}

json variant_json(const VariantSpec& v) {
    return {{"name", v.name}, {"loss", to_json(v.loss)}, {"supervised_only", v.supervised_only}};
}

VariantSpec variant_from(const json& j) {
    return {j.at("name").get<std::string>(), loss_config_from_json(j.at("loss")),
            j.at("supervised_only").get<bool>()};
}

std::string fmt(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v, int digits, double scale = 1.0) {
    return v ? fmt(*v * scale, digits) : std::string("NA");
}

}  // namespace

// --- folds and configs ------------------------------------------------------

json to_json(const FoldSpec& f) {
    json meta = {{"dataset", f.meta.dataset},
                 {"test_fraction", f.meta.test_fraction},
                 {"per_class", f.meta.per_class},
                 {"n_labels", f.meta.n_labels},
                 {"base_protocol", to_string(f.meta.base_protocol)},
                 {"imbalance_class", f.meta.imbalance_class ? json(*f.meta.imbalance_class) : json(nullptr)},
                 {"keep_fraction", f.meta.keep_fraction},
                 {"imbalance_seed", f.meta.imbalance_seed}};
    return {{"kind", "fold"},          {"protocol", to_string(f.protocol)}, {"seed", f.seed},
            {"labeled", f.labeled},    {"unlabeled", f.unlabeled},         {"test", f.test},
            {"meta", std::move(meta)}};
}

FoldSpec fold_from_json(const json& j) {
    expect_kind(j, "fold");
    FoldSpec f;
    f.protocol = parse_protocol(j.at("protocol").get<std::string>());
    f.seed = j.at("seed").get<std::uint64_t>();
    f.labeled = j.at("labeled").get<std::vector<int>>();
    f.unlabeled = j.at("unlabeled").get<std::vector<int>>();
    f.test = j.at("test").get<std::vector<int>>();
    const auto& m = j.at("meta");
    f.meta.dataset = m.at("dataset").get<std::string>();
    f.meta.test_fraction = m.at("test_fraction").get<double>();
    f.meta.per_class = m.at("per_class").get<int>();
    f.meta.n_labels = m.at("n_labels").get<int>();
    f.meta.base_protocol = parse_protocol(m.at("base_protocol").get<std::string>());
    if (!m.at("imbalance_class").is_null()) f.meta.imbalance_class = m.at("imbalance_class").get<int>();
    f.meta.keep_fraction = m.at("keep_fraction").get<double>();
    f.meta.imbalance_seed = m.at("imbalance_seed").get<std::uint64_t>();
    return f;
}

json to_json(const LossConfig& c) {
    return {{"variant", to_string(c.variant)}, {"tau", c.tau},           {"lambda_u", c.lambda_u},
            {"lambda_phi", c.lambda_phi},      {"mu", c.mu},             {"mean_over_accepted", c.mean_over_accepted}};
}

LossConfig loss_config_from_json(const json& j) {
    LossConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.tau = j.at("tau").get<double>();
    c.lambda_u = j.at("lambda_u").get<double>();
    c.lambda_phi = j.at("lambda_phi").get<double>();
    c.mu = j.at("mu").get<double>();
    c.mean_over_accepted = j.at("mean_over_accepted").get<bool>();
    return c;
}

json to_json(const RunConfig& c) {
    json fold = {{"protocol", to_string(c.fold.protocol)},
                 {"per_class", c.fold.per_class},
                 {"n_labels", c.fold.n_labels},
                 {"seed", c.fold.seed},
                 {"test_fraction", c.fold.test_fraction},
                 {"imbalance", c.fold.imbalance},
                 {"keep_fraction", c.fold.keep_fraction},
                 {"imbalance_class", c.fold.imbalance_class},
                 {"path", c.fold.path},
                 {"spec", c.fold.spec ? to_json(*c.fold.spec) : json(nullptr)}};
    return {
        {"dataset",
         {{"kind", c.dataset.kind},
          {"n", c.dataset.n},
          {"n_classes", c.dataset.n_classes},
          {"spread", c.dataset.spread},
          {"noise", c.dataset.noise},
          {"dim", c.dataset.dim},
          {"seed", c.dataset.seed}}},
        {"fold", std::move(fold)},
        {"model", {{"hidden", c.model.hidden}, {"activation", activation_name(c.model.activation)}}},
        {"loss", to_json(c.loss)},
        {"optim",
         {{"learning_rate", c.optim.learning_rate},
          {"momentum", c.optim.momentum},
          {"weight_decay", c.optim.weight_decay},
          {"ema_decay", c.optim.ema_decay},
          {"schedule", schedule_name(c.optim.schedule)}}},
        {"augment",
         {{"weak_fraction", c.augment.weak_fraction},
          {"strong_fraction", c.augment.strong_fraction},
          {"max_angle_deg", c.augment.max_angle_deg},
          {"scale_jitter", c.augment.scale_jitter}}},
        {"batch_labeled", c.batch_labeled},
        {"ratio", c.ratio},
        {"total_steps", c.total_steps},
        {"eval_interval", c.eval_interval},
        {"train_seed", c.train_seed},
        {"eval_source", c.eval_source == EvalSource::ema ? "ema" : "raw"},
        {"supervised_only", c.supervised_only},
    };
}

json default_config_json() { return to_json(RunConfig{}); }

RunConfig run_config_from_json(const json& patch) {
    json j = default_config_json();
    // The fold spec is an opaque document; take it whole.
    json spec = nullptr;
    json rest = patch;
    if (rest.is_object() && rest.contains("fold") && rest["fold"].is_object() && rest["fold"].contains("spec")) {
        spec = rest["fold"]["spec"];
        rest["fold"].erase("spec");
    }
    merge_strict(j, rest, "");

    RunConfig c;
    const auto& d = j.at("dataset");
    c.dataset.kind = d.at("kind").get<std::string>();
    c.dataset.n = d.at("n").get<int>();
    c.dataset.n_classes = d.at("n_classes").get<int>();
    c.dataset.spread = d.at("spread").get<double>();
    c.dataset.noise = d.at("noise").get<double>();
    c.dataset.dim = d.at("dim").get<int>();
    c.dataset.seed = d.at("seed").get<std::uint64_t>();

    const auto& f = j.at("fold");
    c.fold.protocol = parse_protocol(f.at("protocol").get<std::string>());
    c.fold.per_class = f.at("per_class").get<int>();
    c.fold.n_labels = f.at("n_labels").get<int>();
    c.fold.seed = f.at("seed").get<std::uint64_t>();
    c.fold.test_fraction = f.at("test_fraction").get<double>();
    c.fold.imbalance = f.at("imbalance").get<bool>();
    c.fold.keep_fraction = f.at("keep_fraction").get<double>();
    c.fold.imbalance_class = f.at("imbalance_class").get<int>();
    c.fold.path = f.at("path").get<std::string>();
    if (!spec.is_null()) c.fold.spec = fold_from_json(spec);

    const auto& m = j.at("model");
    c.model.hidden = m.at("hidden").get<std::vector<std::size_t>>();
    c.model.activation = parse_activation(m.at("activation").get<std::string>());

    c.loss = loss_config_from_json(j.at("loss"));

    const auto& o = j.at("optim");
    c.optim.learning_rate = o.at("learning_rate").get<double>();
    c.optim.momentum = o.at("momentum").get<double>();
    c.optim.weight_decay = o.at("weight_decay").get<double>();
    c.optim.ema_decay = o.at("ema_decay").get<double>();
    c.optim.schedule = parse_schedule(o.at("schedule").get<std::string>());

    const auto& a = j.at("augment");
    c.augment.weak_fraction = a.at("weak_fraction").get<double>();
    c.augment.strong_fraction = a.at("strong_fraction").get<double>();
    c.augment.max_angle_deg = a.at("max_angle_deg").get<double>();
    c.augment.scale_jitter = a.at("scale_jitter").get<double>();

    c.batch_labeled = j.at("batch_labeled").get<int>();
    c.ratio = j.at("ratio").get<int>();
    c.total_steps = j.at("total_steps").get<std::int64_t>();
    c.eval_interval = j.at("eval_interval").get<std::int64_t>();
    c.train_seed = j.at("train_seed").get<std::uint64_t>();
    const auto src = j.at("eval_source").get<std::string>();
    if (src != "ema" && src != "raw") throw InputError("eval_source must be ema or raw");
    c.eval_source = src == "ema" ? EvalSource::ema : EvalSource::raw;
    c.supervised_only = j.at("supervised_only").get<bool>();
    return c;
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    const json defaults = default_config_json();
    const json* def = &defaults;
    json* slot = &config;
    std::stringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) path.push_back(part);
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (!def->is_object() || !def->contains(path[i])) throw InputError("unknown config key '" + key + "'");
        def = &def->at(path[i]);
        if (!slot->is_object()) *slot = json::object();
        slot = &(*slot)[path[i]];
    }
    if (def->is_object()) throw InputError("config key '" + key + "' names a section, not a value");
    *slot = std::move(value);
}

// --- results ----------------------------------------------------------------

json to_json(const RunResult& r) {
    json cps = json::array();
    for (const auto& c : r.checkpoints) {
        cps.push_back({{"step", c.step},
                       {"test_error", c.test_error},
                       {"coverage", c.coverage},
                       {"purity", opt(c.purity)},
                       {"mean_weight", c.mean_weight},
                       {"accepted", c.accepted},
                       {"acceptance_fingerprint", c.acceptance_fingerprint},
                       {"collapsed", c.collapsed},
                       {"loss_sup", c.loss_sup},
                       {"loss_unsup", c.loss_unsup},
                       {"loss_phi", c.loss_phi}});
    }
    json failure = nullptr;
    if (r.failure)
        failure = {{"step", r.failure->step},
                   {"message", r.failure->message},
                   {"batch_fingerprint", r.failure->batch_fingerprint}};
    return {{"kind", "run_result"},
            {"config_hash", r.config_hash},
            {"config", to_json(r.config)},
            {"checkpoints", std::move(cps)},
            {"final_confusion", confusion_json(r.final_confusion)},
            {"last_error", opt(r.last_error)},
            {"best_error", opt(r.best_error)},
            {"best_step", r.best_step},
            {"failure", std::move(failure)}};
}

RunResult run_result_from_json(const json& j) {
    expect_kind(j, "run_result");
    RunResult r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.config = run_config_from_json(j.at("config"));
    for (const auto& c : j.at("checkpoints")) {
        Checkpoint cp;
        cp.step = c.at("step").get<std::int64_t>();
        cp.test_error = c.at("test_error").get<double>();
        cp.coverage = c.at("coverage").get<double>();
        cp.purity = get_opt(c, "purity");
        cp.mean_weight = c.at("mean_weight").get<double>();
        cp.accepted = c.at("accepted").get<int>();
        cp.acceptance_fingerprint = c.at("acceptance_fingerprint").get<std::uint64_t>();
        cp.collapsed = c.at("collapsed").get<std::vector<int>>();
        cp.loss_sup = c.at("loss_sup").get<double>();
        cp.loss_unsup = c.at("loss_unsup").get<double>();
        cp.loss_phi = c.at("loss_phi").get<double>();
        r.checkpoints.push_back(std::move(cp));
    }
    r.final_confusion = confusion_from(j.at("final_confusion"));
    r.last_error = get_opt(j, "last_error");
    r.best_error = get_opt(j, "best_error");
    r.best_step = j.at("best_step").get<std::int64_t>();
    if (!j.at("failure").is_null()) {
        const auto& f = j.at("failure");
        r.failure = RunFailure{f.at("step").get<std::int64_t>(), f.at("message").get<std::string>(),
                               f.at("batch_fingerprint").get<std::uint64_t>()};
    }
    return r;
}

json to_json(const BenchmarkTable& t) {
    json variants = json::array();
    for (const auto& v : t.variants) variants.push_back(variant_json(v));
    json cells = json::array();
    for (const auto& row : t.cells) {
        json jr = json::array();
        for (const auto& c : row)
            jr.push_back({{"result", c.result ? to_json(*c.result) : json(nullptr)},
                          {"error", c.error ? json(*c.error) : json(nullptr)}});
        cells.push_back(std::move(jr));
    }
    json summary = json::array();
    for (const auto& s : t.summary) summary.push_back(summary_json(s));
    return {{"kind", "benchmark"},
            {"fold_seeds", t.fold_seeds},
            {"variants", std::move(variants)},
            {"cells", std::move(cells)},
            {"summary", std::move(summary)}};
}

BenchmarkTable benchmark_from_json(const json& j) {
    expect_kind(j, "benchmark");
    BenchmarkTable t;
    t.fold_seeds = j.at("fold_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& v : j.at("variants")) t.variants.push_back(variant_from(v));
    for (const auto& row : j.at("cells")) {
        std::vector<BenchmarkCell> r;
        for (const auto& c : row) {
            BenchmarkCell cell;
            if (!c.at("result").is_null()) cell.result = run_result_from_json(c.at("result"));
            if (!c.at("error").is_null()) cell.error = c.at("error").get<std::string>();
            r.push_back(std::move(cell));
        }
        if (r.size() != t.variants.size()) throw ParseError("benchmark row width differs from variant count");
        t.cells.push_back(std::move(r));
    }
    if (t.cells.size() != t.fold_seeds.size()) throw ParseError("benchmark row count differs from fold count");
    for (const auto& s : j.at("summary")) t.summary.push_back(summary_from(s));
    return t;
}

json to_json(const ComparisonReport& r) {
    return {{"kind", "comparison"},
            {"baseline", r.baseline},
            {"method", r.method},
            {"folds", r.folds},
            {"baseline_errors", r.baseline_errors},
            {"method_errors", r.method_errors},
            {"gain", gain_json(r.gain)},
            {"wilcoxon", wilcoxon_json(r.wilcoxon)}};
}

ComparisonReport comparison_from_json(const json& j) {
    expect_kind(j, "comparison");
    ComparisonReport r;
    r.baseline = j.at("baseline").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.folds = j.at("folds").get<std::vector<std::uint64_t>>();
    r.baseline_errors = j.at("baseline_errors").get<std::vector<double>>();
    r.method_errors = j.at("method_errors").get<std::vector<double>>();
    r.gain = gain_from(j.at("gain"));
    r.wilcoxon = wilcoxon_from(j.at("wilcoxon"));
    return r;
}

json to_json(const SweepTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"value", r.value},
                        {"last_error", opt(r.last_error)},
                        {"best_error", opt(r.best_error)},
                        {"collapsed", r.collapsed},
                        {"error", r.error ? json(*r.error) : json(nullptr)}});
    return {{"kind", "sweep"}, {"axis", to_string(t.axis)}, {"variant", t.variant}, {"rows", std::move(rows)}};
}

SweepTable sweep_from_json(const json& j) {
    expect_kind(j, "sweep");
    SweepTable t;
    t.axis = parse_sweep_axis(j.at("axis").get<std::string>());
    t.variant = j.at("variant").get<std::string>();
    for (const auto& r : j.at("rows")) {
        SweepRow row;
        row.value = r.at("value").get<double>();
        row.last_error = get_opt(r, "last_error");
        row.best_error = get_opt(r, "best_error");
        row.collapsed = r.at("collapsed").get<std::vector<int>>();
        if (!r.at("error").is_null()) row.error = r.at("error").get<std::string>();
        t.rows.push_back(std::move(row));
    }
    return t;
}

json to_json(const CalibrationReport& r) {
    return {{"kind", "calibration"},
            {"estimate",
             {{"loss_fm", r.estimate.loss_fm},
              {"loss_sfm", r.estimate.loss_sfm},
              {"factor", r.estimate.factor},
              {"window_start", r.estimate.window_start},
              {"window_end", r.estimate.window_end}}},
            {"lambda_u_fm", r.lambda_u_fm},
            {"lambda_u_sfm", r.lambda_u_sfm},
            {"lambda_phi_bound", r.lambda_phi_bound},
            {"calibrated", to_json(r.calibrated)}};
}

CalibrationReport calibration_from_json(const json& j) {
    expect_kind(j, "calibration");
    CalibrationReport r;
    const auto& e = j.at("estimate");
    r.estimate.loss_fm = e.at("loss_fm").get<double>();
    r.estimate.loss_sfm = e.at("loss_sfm").get<double>();
    r.estimate.factor = e.at("factor").get<double>();
    r.estimate.window_start = e.at("window_start").get<std::int64_t>();
    r.estimate.window_end = e.at("window_end").get<std::int64_t>();
    r.lambda_u_fm = j.at("lambda_u_fm").get<double>();
    r.lambda_u_sfm = j.at("lambda_u_sfm").get<double>();
    r.lambda_phi_bound = j.at("lambda_phi_bound").get<double>();
    r.calibrated = loss_config_from_json(j.at("calibrated"));
    return r;
}

json column_json(const BenchmarkTable& t, const std::string& variant) {
    const int c = t.column(variant);
    if (c < 0) throw InputError("no column named '" + variant + "'");
    json errors = json::array();
    for (const auto& row : t.cells) errors.push_back(opt(row[static_cast<std::size_t>(c)].headline()));
    return {{"kind", "column"}, {"variant", variant}, {"folds", t.fold_seeds}, {"errors", std::move(errors)}};
}

void column_from_json(const json& j, std::string& name, std::vector<std::uint64_t>& folds,
                      std::vector<double>& errors) {
    expect_kind(j, "column");
    name = j.at("variant").get<std::string>();
    folds = j.at("folds").get<std::vector<std::uint64_t>>();
    errors.clear();
    for (const auto& e : j.at("errors")) {
        if (e.is_null()) throw InputError("column '" + name + "' contains a failed run");
        errors.push_back(e.get<double>());
    }
    if (errors.size() != folds.size()) throw ParseError("column has mismatched folds and errors");
}

// --- files ------------------------------------------------------------------

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_text(const std::string& text, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void save_json(const json& j, const std::filesystem::path& path) { write_text(dump(j), path); }

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string kind_of(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) return "";
    return j.at("kind").get<std::string>();
}

namespace {

template <typename F>
auto load_typed(const std::filesystem::path& path, F&& parse) {
    const json j = load_json(path);
    try {
        return parse(j);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace

FoldSpec load_fold(const std::filesystem::path& path) { return load_typed(path, fold_from_json); }
RunResult load_run_result(const std::filesystem::path& path) { return load_typed(path, run_result_from_json); }
BenchmarkTable load_benchmark(const std::filesystem::path& path) { return load_typed(path, benchmark_from_json); }
SweepTable load_sweep(const std::filesystem::path& path) { return load_typed(path, sweep_from_json); }
ComparisonReport load_comparison(const std::filesystem::path& path) {
    return load_typed(path, comparison_from_json);
}

// --- CSV --------------------------------------------------------------------

std::string comparison_csv(const ComparisonReport& r) {
    std::ostringstream out;
    out << "fold," << r.baseline << "," << r.method << ",gain\n";
    for (std::size_t i = 0; i < r.folds.size(); ++i)
        out << r.folds[i] << "," << fmt(100.0 * r.baseline_errors[i], 2) << ","
            << fmt(100.0 * r.method_errors[i], 2) << "," << fmt(100.0 * r.gain.gains[i], 2) << "\n";
    const auto base = summarize(std::vector<std::optional<double>>(r.baseline_errors.begin(), r.baseline_errors.end()));
    const auto meth = summarize(std::vector<std::optional<double>>(r.method_errors.begin(), r.method_errors.end()));
    auto pm = [](const ColumnSummary& s) { return fmt_opt(s.mean, 2, 100.0) + " ± " + fmt_opt(s.std, 2, 100.0); };
    out << "mean±std," << pm(base) << "," << pm(meth) << "," << fmt(100.0 * r.gain.mean, 2) << " ± "
        << fmt_opt(r.gain.std, 2, 100.0) << "\n";
    char p[64];
    std::snprintf(p, sizeof p, "%.6f", r.wilcoxon.p_value);
    out << "p-value,,," << p << "\n";
    return out.str();
}

std::string benchmark_csv(const BenchmarkTable& t) {
    std::ostringstream out;
    out << "fold";
    for (const auto& v : t.variants) out << "," << v.name;
    out << "\n";
    for (std::size_t f = 0; f < t.cells.size(); ++f) {
        out << t.fold_seeds[f];
        for (const auto& c : t.cells[f]) out << "," << fmt_opt(c.headline(), 2, 100.0);
        out << "\n";
    }
    auto row = [&](const char* name, auto get) {
        out << name;
        for (const auto& s : t.summary) out << "," << fmt_opt(get(s), 2, 100.0);
        out << "\n";
    };
    row("mean", [](const ColumnSummary& s) { return s.mean; });
    row("std", [](const ColumnSummary& s) { return s.std; });
    row("max", [](const ColumnSummary& s) { return s.max; });
    row("min", [](const ColumnSummary& s) { return s.min; });
    row("range", [](const ColumnSummary& s) { return s.range; });
    return out.str();
}

std::string sweep_csv(const SweepTable& t) {
    std::ostringstream out;
    out << to_string(t.axis) << ",last_error,best_error,collapsed\n";
    for (const auto& r : t.rows) {
        char v[64];
        std::snprintf(v, sizeof v, "%g", r.value);
        out << v << "," << fmt_opt(r.last_error, 2, 100.0) << "," << fmt_opt(r.best_error, 2, 100.0) << ",";
        for (std::size_t i = 0; i < r.collapsed.size(); ++i) out << (i ? " " : "") << r.collapsed[i];
        out << "\n";
    }
    return out.str();
}

std::string checkpoint_csv(const RunResult& r) {
    std::ostringstream out;
    out << "step,test_error,coverage,purity,mean_weight\n";
    for (const auto& c : r.checkpoints)
        out << c.step << "," << fmt(100.0 * c.test_error, 2) << "," << fmt(c.coverage, 4) << ","
            << fmt_opt(c.purity, 4) << "," << fmt(c.mean_weight, 4) << "\n";
    return out.str();
}

}  // namespace spl
