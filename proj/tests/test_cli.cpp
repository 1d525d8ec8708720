#include "spl/serialize.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace spl;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        const fs::path p = fs::temp_directory_path() / "spl_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        std::ofstream(p / "cfg.json") << R"({"dataset": {"n": 200, "n_classes": 4},
  "model": {"hidden": [8]}, "fold": {"per_class": 3},
  "batch_labeled": 4, "ratio": 2, "total_steps": 40, "eval_interval": 20})";
        return p;
    }();
    return dir;
}

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = "cd '" + work_dir().string() + "' && " + env + " '" SPLLAB_PATH "' " + args +
                            " > last.out 2> last.err";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(run("") == 1);
    CHECK(run("train") == 1);
    CHECK(slurp(work_dir() / "last.err").find("--config") != std::string::npos);
    CHECK(run("train --config missing.json") == 1);
    CHECK(run("train --config cfg.json --set loss.nope=3") == 1);
    CHECK(run("train --config cfg.json --variant mixmatch") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("--help") == 0);
}

TEST_CASE("train writes a result and its fold") {
    REQUIRE(run("train --config cfg.json --variant sfm --fold-seed 0 --train-seed 2046 --out t") == 0);
    const RunResult r = load_run_result(work_dir() / "t" / "result.json");
    CHECK(r.config.train_seed == 2046);
    CHECK(r.config.loss.variant == Variant::sfm);
    CHECK(load_fold(work_dir() / "t" / "fold.json").seed == 0);
    CHECK(fs::exists(work_dir() / "t" / "checkpoints.csv"));

    // Idempotent.
    const std::string first = slurp(work_dir() / "t" / "result.json");
    REQUIRE(run("train --config cfg.json --variant sfm --fold-seed 0 --train-seed 2046 --out t") == 0);
    CHECK(slurp(work_dir() / "t" / "result.json") == first);
}

TEST_CASE("output directory from the environment") {
    REQUIRE(run("train --config cfg.json --variant fm", "SPL_OUT_DIR=envout") == 0);
    CHECK(fs::exists(work_dir() / "envout" / "result.json"));
}

TEST_CASE("a diverging run exits with 2") {
    CHECK(run("train --config cfg.json --set optim.learning_rate=1e9 --set optim.momentum=0 --out div") == 2);
    CHECK(load_run_result(work_dir() / "div" / "result.json").failure.has_value());
}

TEST_CASE("sample-folds writes one file per fold") {
    REQUIRE(run("sample-folds --protocol random --n-labels 40 --folds 6 --out folds") == 0);
    for (int s = 0; s < 6; ++s) {
        const FoldSpec f = load_fold(work_dir() / "folds" / ("fold_" + std::to_string(s) + ".json"));
        CHECK(f.labeled.size() == 40);
        CHECK(f.protocol == Protocol::random);
    }
    CHECK(run("sample-folds --protocol diagonal") == 1);
}

TEST_CASE("benchmark, compare and export chain together") {
    REQUIRE(run("benchmark --config cfg.json --folds 3 --variant fm --variant sfm --out b") == 0);
    REQUIRE(run("compare --baseline b/column_fm.json --method b/column_sfm.json --out c") == 0);
    const std::string out = slurp(work_dir() / "last.out");
    CHECK(out.find("fold,fm,sfm,gain") != std::string::npos);
    CHECK(out.find("p-value") != std::string::npos);
    CHECK(comparison_from_json(load_json(work_dir() / "c" / "comparison.json")).folds.size() == 3);

    REQUIRE(run("compare --table b/benchmark.json --baseline fm --method sfm --out c2") == 0);
    CHECK(slurp(work_dir() / "c2" / "comparison.json") == slurp(work_dir() / "c" / "comparison.json"));

    REQUIRE(run("export-plots b/benchmark.json c/comparison.json --out p") == 0);
    CHECK(fs::exists(work_dir() / "p" / "benchmark.csv"));
    CHECK(fs::exists(work_dir() / "p" / "comparison.csv"));
    CHECK(run("export-plots cfg.json --out p") == 1);
}

TEST_CASE("sweep and calibrate") {
    REQUIRE(run("sweep --config cfg.json --axis tau --values 0.8,0.9 --out s") == 0);
    CHECK(sweep_from_json(load_json(work_dir() / "s" / "sweep.json")).rows.size() == 2);
    CHECK(run("sweep --config cfg.json --axis tau --values 0.8,x --out s") == 1);
    CHECK(run("calibrate --config cfg.json --set total_steps=400 --set loss.tau=0.7 --out cal") == 0);
    CHECK(kind_of(load_json(work_dir() / "cal" / "calibration.json")) == "calibration");
}
