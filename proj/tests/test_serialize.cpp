#include "spl/errors.hpp"
#include "spl/serialize.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace spl;
namespace fs = std::filesystem;

namespace {

RunConfig tiny() {
    RunConfig c;
    c.dataset.n = 200;
    c.dataset.n_classes = 4;
    c.model.hidden = {8};
    c.fold.per_class = 3;
    c.batch_labeled = 4;
    c.ratio = 2;
    c.total_steps = 40;
    c.eval_interval = 20;
    return c;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("spl_serialize_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("config round trip and defaults") {
    RunConfig c = tiny();
    c.loss.variant = Variant::pl;
    c.loss.tau = 0.9;
    c.optim.schedule = Schedule::constant;
    c.eval_source = EvalSource::raw;
    c.fold.protocol = Protocol::random;
    c.model.activation = Activation::tanh;
    CHECK(run_config_from_json(to_json(c)) == c);
    CHECK(run_config_from_json(json::object()) == RunConfig{});

    const json partial = {{"loss", {{"tau", 0.8}}}, {"total_steps", 7}};
    const RunConfig p = run_config_from_json(partial);
    CHECK(p.loss.tau == 0.8);
    CHECK(p.total_steps == 7);
    CHECK(p.loss.variant == Variant::sfm);

    CHECK_THROWS_AS(run_config_from_json({{"loss", {{"temperature", 1.0}}}}), InputError);
    CHECK_THROWS_AS(run_config_from_json({{"optimizer", {}}}), InputError);
}

TEST_CASE("explicit fold travels inside the config") {
    RunConfig c = tiny();
    const Dataset ds = build_dataset(c.dataset);
    c.fold.spec = sample_fold_balanced(ds, 3, 4, 0.2);
    CHECK(run_config_from_json(to_json(c)) == c);
}

TEST_CASE("dotted overrides") {
    json doc = json::object();
    apply_override(doc, "loss.tau=0.9");
    apply_override(doc, "loss.variant=fm");
    apply_override(doc, "model.hidden=[32,32]");
    apply_override(doc, "supervised_only=true");
    const RunConfig c = run_config_from_json(doc);
    CHECK(c.loss.tau == 0.9);
    CHECK(c.loss.variant == Variant::fm);
    CHECK(c.model.hidden == std::vector<std::size_t>{32, 32});
    CHECK(c.supervised_only);

    CHECK_THROWS_AS(apply_override(doc, "loss.nope=1"), InputError);
    CHECK_THROWS_AS(apply_override(doc, "loss=1"), InputError);
    CHECK_THROWS_AS(apply_override(doc, "tau"), InputError);
}

TEST_CASE("fold round trip") {
    const Dataset ds = gen_blobs(300, 3, 0.2, 0);
    const FoldSpec f = apply_imbalance(sample_fold_random(ds, 12, 5, 0.2), ds, 5, 0.6);
    CHECK(fold_from_json(to_json(f)) == f);
    const fs::path dir = scratch_dir("fold");
    persist(f, dir / "f.json");
    CHECK(load_fold(dir / "f.json") == f);
    CHECK(kind_of(load_json(dir / "f.json")) == "fold");
}

TEST_CASE("result documents round trip") {
    const RunConfig c = tiny();
    const RunResult r = run_training(c);
    CHECK(run_result_from_json(to_json(r)) == r);
    CHECK(dump(to_json(r)) == dump(to_json(run_result_from_json(json::parse(dump(to_json(r)))))));

    const Dataset ds = build_dataset(c.dataset);
    LossConfig fm;
    fm.variant = Variant::fm;
    LossConfig sup = fm;
    sup.lambda_u = 0.0;
    const BenchmarkTable t = run_benchmark(c, {sample_fold_balanced(ds, 3, 0, 0.2), sample_fold_balanced(ds, 3, 1, 0.2)},
                                           {{"fm", fm, false}, {"sup", sup, true}});
    CHECK(benchmark_from_json(to_json(t)) == t);

    const ComparisonReport cmp = compare_methods(t, "sup", "fm");
    CHECK(comparison_from_json(to_json(cmp)) == cmp);

    std::string name;
    std::vector<std::uint64_t> folds;
    std::vector<double> errors;
    column_from_json(column_json(t, "fm"), name, folds, errors);
    CHECK(name == "fm");
    CHECK(folds == t.fold_seeds);
    CHECK(errors[1] == *t.cells[1][0].headline());

    RunConfig sc = c;
    sc.total_steps = 20;
    const SweepTable sw = sweep(sc, SweepAxis::mu, {0.5, 2.0});
    CHECK(sweep_from_json(to_json(sw)) == sw);

    CalibrationReport cal;
    cal.estimate = {0.22, 0.4, 0.5, 2, 4};
    cal.lambda_u_sfm = 1.1;
    cal.lambda_phi_bound = 0.05;
    CHECK(calibration_from_json(to_json(cal)) == cal);

    const fs::path dir = scratch_dir("docs");
    persist(t, dir / "t.json");
    CHECK(load_benchmark(dir / "t.json") == t);
    persist(r, dir / "r.json");
    CHECK(load_run_result(dir / "r.json") == r);
}

TEST_CASE("bad files give structured errors") {
    const fs::path dir = scratch_dir("bad");
    CHECK_THROWS_AS(load_json(dir / "missing.json"), IoError);

    {
        std::ofstream out(dir / "broken.json");
        out << "{\"kind\": \"run_result\", \"checkpoints\": [";
    }
    CHECK_THROWS_AS(load_json(dir / "broken.json"), ParseError);
    CHECK_THROWS_AS(load_run_result(dir / "broken.json"), ParseError);

    {
        std::ofstream out(dir / "wrong.json");
        out << "{\"kind\": \"fold\", \"protocol\": \"balanced\"}";
    }
    CHECK_THROWS_AS(load_fold(dir / "wrong.json"), ParseError);
    CHECK_THROWS_AS(load_run_result(dir / "wrong.json"), ParseError);
}

TEST_CASE("csv exports") {
    const std::vector<double> fm{0.0977, 0.0743, 0.0748, 0.0736, 0.1560, 0.0801};
    const std::vector<double> sfm{0.0625, 0.0707, 0.0545, 0.0632, 0.1144, 0.0647};
    const ComparisonReport r = compare_errors("fm", "sfm", {0, 1, 2, 3, 4, 5}, fm, sfm);
    const std::string csv = comparison_csv(r);
    CHECK(csv.rfind("fold,fm,sfm,gain\n", 0) == 0);
    CHECK(csv.find("0,9.77,6.25,3.52\n") != std::string::npos);
    CHECK(csv.find("p-value,,,0.015625") != std::string::npos);

    RunResult rr;
    rr.checkpoints.push_back({});
    rr.checkpoints[0].step = 10;
    rr.checkpoints[0].test_error = 0.25;
    const std::string cp = checkpoint_csv(rr);
    CHECK(cp.rfind("step,test_error,coverage,purity,mean_weight\n", 0) == 0);
    CHECK(cp.find("10,") != std::string::npos);
    CHECK(cp.find("NA") != std::string::npos);
}
