// End-to-end tests of the command-line binary: exit codes, output files,
// reproducibility, and the published runtime bounds. The binary path comes
// from the build system via STACKELGRAD_CLI_PATH.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "stackelgrad/checkpoint.hpp"
#include "stackelgrad/dataset.hpp"
#include "stackelgrad/models.hpp"

using namespace stackelgrad;
namespace fs = std::filesystem;

namespace {

std::string cli() { return STACKELGRAD_CLI_PATH; }

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
    double seconds = 0.0;
};

fs::path scratch_root() {
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() /
                     ("sg_cli_" + std::to_string(static_cast<long>(::getpid())));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = scratch_root() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunResult run(const std::string& args, const std::string& tag) {
    fs::path cap = scratch_root() / ("cap_" + tag);
    fs::create_directories(cap);
    std::string cmd = args + " > \"" + (cap / "out.txt").string() + "\" 2> \"" +
                      (cap / "err.txt").string() + "\"";
    auto t0 = std::chrono::steady_clock::now();
    int status = std::system(cmd.c_str());
    auto t1 = std::chrono::steady_clock::now();

    RunResult r;
    r.seconds = std::chrono::duration<double>(t1 - t0).count();
    if (status == -1)
        r.code = -1;
    else if (WIFEXITED(status))
        r.code = WEXITSTATUS(status);
    else
        r.code = 128;
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    r.out = slurp(cap / "out.txt");
    r.err = slurp(cap / "err.txt");
    return r;
}

std::string quote_arg(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing file: ", p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_spec(const std::string& name, const std::string& body) {
    fs::path p = scratch_root() / name;
    std::ofstream(p, std::ios::binary) << body;
    return p;
}

const char* kToySpec = R"({
  "data": {"classes": 3, "dim": 2, "samples": 90, "separation": 4.0, "seed": 3},
  "game": {
    "budget": 0.5,
    "seed": 11,
    "classifier": {"hidden": [8]},
    "generator": {"encoder_hidden": [8], "bottleneck": 4, "decoder_hidden": [8]},
    "solver": {"epochs": 3, "batch_size": 16}
  },
  "victim": {"epochs": 5, "lr": 0.1, "batch_size": 32},
  "experiment": {"fractions": [0.5, 1.0], "seeds": [0], "clean_floor": 0.6}
})";

}  // namespace

TEST_CASE("argument and config failures exit with code 2") {
    fs::path out = fresh_dir("argfail");

    CHECK(run(quote_arg(cli()), "noargs").code == 2);
    CHECK(run(quote_arg(cli()) + " frobnicate", "badcmd").code == 2);
    CHECK(run(quote_arg(cli()) + " --help", "help").code == 0);
    CHECK(run(quote_arg(cli()) + " train-gen --out " + quote_arg(out), "nospec").code == 2);
    CHECK(run(quote_arg(cli()) + " train-gen --spec /nonexistent.json --out " + quote_arg(out),
              "missingfile")
              .code == 2);

    fs::path bad = write_spec("bad.json", "{ this is not json");
    RunResult r = run(quote_arg(cli()) + " train-gen --spec " + quote_arg(bad) + " --out " + quote_arg(out),
                      "badjson");
    CHECK(r.code == 2);
    CHECK(r.err.find("malformed JSON") != std::string::npos);
    // Rejected before any compute: nothing was produced.
    CHECK_FALSE(fs::exists(out / "generator.ckpt"));
    CHECK_FALSE(fs::exists(out / "run.csv"));

    fs::path nobudget = write_spec("nobudget.json",
                                   R"({"data": {"samples": 90}, "game": {"seed": 1}})");
    RunResult rb = run(
        quote_arg(cli()) + " train-gen --spec " + quote_arg(nobudget) + " --out " + quote_arg(out),
        "nobudget");
    CHECK(rb.code == 2);
    CHECK(rb.err.find("game.budget") != std::string::npos);

    fs::path spec = write_spec("toy.json", kToySpec);
    CHECK(run(quote_arg(cli()) + " train-gen --spec " + quote_arg(spec) + " --out " + quote_arg(out) +
                  " --jobs 0",
              "jobs0")
              .code == 2);
    CHECK(run("STACKELGRAD_JOBS=banana " + quote_arg(cli()) + " experiment --spec " + quote_arg(spec) +
                  " --out " + quote_arg(out),
              "jobsenvbad")
              .code == 2);
}

TEST_CASE("training run produces a reproducible output directory") {
    fs::path spec = write_spec("toy.json", kToySpec);
    fs::path a = fresh_dir("train_a");
    fs::path b = fresh_dir("train_b");

    RunResult ra = run(quote_arg(cli()) + " train-gen --spec " + quote_arg(spec) + " --out " + quote_arg(a),
                       "train_a");
    REQUIRE_MESSAGE(ra.code == 0, ra.err);
    CHECK(ra.seconds < 60.0);  // published bound for the toy config
    CHECK(ra.out.find("trained generator") != std::string::npos);

    for (const char* f : {"config.json", "run.csv", "generator.ckpt", "summary.json"})
        CHECK_MESSAGE(fs::exists(a / f), f);

    std::string summary = read_text(a / "summary.json");
    CHECK(summary.find("\"version\"") != std::string::npos);
    CHECK(summary.find("\"command\": \"train-gen\"") != std::string::npos);
    std::string config = read_text(a / "config.json");
    CHECK(config.find("\"spec\"") != std::string::npos);
    CHECK(config.find("\"budget\": 0.5") != std::string::npos);

    std::string runcsv = read_text(a / "run.csv");
    CHECK(runcsv.rfind("step,j_c,j_c_inner,j_a,q_hat,lambda,grad_ja_norm,grad_q_norm,degenerate",
                       0) == 0);

    RunResult rb = run(quote_arg(cli()) + " train-gen --spec " + quote_arg(spec) + " --out " + quote_arg(b),
                       "train_b");
    REQUIRE(rb.code == 0);
    for (const char* f : {"config.json", "run.csv", "generator.ckpt", "summary.json"})
        CHECK_MESSAGE(read_text(a / f) == read_text(b / f), "rerun differs in ", f);

    // --seed overrides the game seed and is visible in the echo.
    fs::path c = fresh_dir("train_c");
    RunResult rc = run(quote_arg(cli()) + " train-gen --spec " + quote_arg(spec) + " --out " +
                           quote_arg(c) + " --seed 123 --quiet",
                       "train_c");
    REQUIRE(rc.code == 0);
    CHECK(rc.out.empty());  // --quiet silences progress
    CHECK(read_text(c / "config.json").find("\"seed\": 123") != std::string::npos);
    CHECK(read_text(c / "run.csv") != read_text(a / "run.csv"));
}

TEST_CASE("poisoning a dataset from a checkpoint") {
    // Fixtures built in-process with the library the binary links against.
    fs::path fix = fresh_dir("poison_fix");
    LabeledDataset data = make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 120, 4.0, 5);
    save_dataset(data, (fix / "data").string());

    PerturbationGenerator gen =
        PerturbationGenerator::init({2, 8, 4}, {4, 8, 2}, 0.25, Activation::Tanh, 7);
    save_generator(gen, (fix / "gen.ckpt").string());
    PerturbationGenerator zero = PerturbationGenerator::from_parts(
        gen.encoder_dims(), gen.decoder_dims(), gen.budget(), gen.activation(), gen.seed(),
        gen.params().zeros_like());
    save_generator(zero, (fix / "zero.ckpt").string());

    fs::path out = fresh_dir("poison_out");
    RunResult r = run(quote_arg(cli()) + " poison --checkpoint " + quote_arg(fix / "gen.ckpt") +
                          " --data " + quote_arg(fix / "data") + " --out " + quote_arg(out),
                      "poison");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("max perturbation (l_inf):") != std::string::npos);
    CHECK(fs::exists(out / "poisoned" / "features.csv"));
    CHECK(fs::exists(out / "config.json"));

    LabeledDataset poisoned = load_dataset((out / "poisoned").string());
    CHECK(poisoned.labels == data.labels);
    double worst = 0.0;
    for (std::size_t i = 0; i < data.features.data.size(); ++i)
        worst = std::max(worst, std::abs(poisoned.features.data[i] - data.features.data[i]));
    CHECK(worst > 0.0);
    CHECK(worst <= 0.25);  // the budget, exactly enforced

    std::string summary = read_text(out / "summary.json");
    CHECK(summary.find("\"budget\": 0.25") != std::string::npos);

    // The zero generator must reproduce the input features byte for byte.
    fs::path zout = fresh_dir("poison_zero");
    RunResult rz = run(quote_arg(cli()) + " poison --checkpoint " + quote_arg(fix / "zero.ckpt") +
                           " --data " + quote_arg(fix / "data") + " --out " + quote_arg(zout),
                       "poison_zero");
    REQUIRE(rz.code == 0);
    CHECK(rz.out.find("max perturbation (l_inf): 0") != std::string::npos);
    CHECK(read_text(zout / "poisoned" / "features.csv") ==
          read_text(fix / "data" / "features.csv"));

    // Dimension mismatch is a config failure.
    PerturbationGenerator wide =
        PerturbationGenerator::init({5, 8, 4}, {4, 8, 5}, 0.25, Activation::Tanh, 7);
    save_generator(wide, (fix / "wide.ckpt").string());
    CHECK(run(quote_arg(cli()) + " poison --checkpoint " + quote_arg(fix / "wide.ckpt") + " --data " +
                  quote_arg(fix / "data") + " --out " + quote_arg(out),
              "poison_dim")
              .code == 2);

    // Bad clip interval.
    CHECK(run(quote_arg(cli()) + " poison --checkpoint " + quote_arg(fix / "gen.ckpt") + " --data " +
                  quote_arg(fix / "data") + " --out " + quote_arg(out) + " --clip 2 1",
              "poison_clip")
              .code == 2);
}

TEST_CASE("poisoning scales to bulk datasets within the published bound") {
    fs::path fix = fresh_dir("bulk");
    LabeledDataset data = make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 100000, 4.0, 1);
    save_dataset(data, (fix / "data").string());
    PerturbationGenerator gen =
        PerturbationGenerator::init({2, 16, 8}, {8, 16, 2}, 0.5, Activation::Tanh, 2);
    save_generator(gen, (fix / "gen.ckpt").string());

    fs::path out = fresh_dir("bulk_out");
    RunResult r = run(quote_arg(cli()) + " poison --checkpoint " + quote_arg(fix / "gen.ckpt") +
                          " --data " + quote_arg(fix / "data") + " --out " + quote_arg(out) + " --quiet",
                      "bulk");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.seconds < 10.0);
    CHECK(fs::exists(out / "poisoned" / "features.csv"));
}

TEST_CASE("evaluation from a stored checkpoint") {
    fs::path spec = write_spec("toy.json", kToySpec);
    fs::path tr = fresh_dir("eval_train");
    REQUIRE(run(quote_arg(cli()) + " train-gen --spec " + quote_arg(spec) + " --out " + quote_arg(tr),
                "eval_pre")
                .code == 0);

    fs::path out = fresh_dir("eval_out");
    RunResult r = run(quote_arg(cli()) + " eval --spec " + quote_arg(spec) + " --checkpoint " +
                          quote_arg(tr / "generator.ckpt") + " --out " + quote_arg(out),
                      "eval");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("clean") != std::string::npos);
    CHECK(fs::exists(out / "eval.csv"));
    CHECK(fs::exists(out / "curves.csv"));
    std::string curves = read_text(out / "curves.csv");
    CHECK(curves.rfind("seed,epoch,clean_accuracy,poisoned_accuracy", 0) == 0);
    std::string summary = read_text(out / "summary.json");
    CHECK(summary.find("\"max_perturbation\"") != std::string::npos);
}

TEST_CASE("experiment command writes the ratio table") {
    fs::path spec = write_spec("toy.json", kToySpec);
    fs::path out = fresh_dir("exp_out");
    RunResult r = run(quote_arg(cli()) + " experiment --spec " + quote_arg(spec) + " --out " +
                          quote_arg(out) + " --jobs 2",
                      "experiment");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(out / "ratio.csv"));
    std::string table = read_text(out / "ratio.csv");
    CHECK(table.rfind("fraction,clean_accuracy,clean_sd,poisoned_accuracy,poisoned_sd", 0) == 0);
    CHECK(read_text(out / "config.json").find("\"jobs\": 2") != std::string::npos);

    // A spec without an experiment section is a config error.
    fs::path bare = write_spec("bare.json", R"({
      "data": {"classes": 3, "dim": 2, "samples": 90, "separation": 4.0, "seed": 3},
      "game": {"budget": 0.5}
    })");
    CHECK(run(quote_arg(cli()) + " experiment --spec " + quote_arg(bare) + " --out " + quote_arg(out),
              "exp_bare")
              .code == 2);
}

TEST_CASE("diagnostic command emits exactly three traces") {
    fs::path spec = write_spec("toy.json", kToySpec);
    fs::path out = fresh_dir("diag_out");
    RunResult r = run(quote_arg(cli()) + " diag --spec " + quote_arg(spec) + " --out " + quote_arg(out),
                      "diag");
    REQUIRE_MESSAGE(r.code == 0, r.err);

    int traces = 0;
    for (const auto& entry : fs::directory_iterator(out)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("trace_", 0) == 0) ++traces;
    }
    CHECK(traces == 3);
    for (const char* f : {"trace_ce.csv", "trace_ce_clip.csv", "trace_sur.csv"})
        CHECK_MESSAGE(fs::exists(out / f), f);

    std::string summary = read_text(out / "summary.json");
    CHECK(summary.find("\"max_grad_ja\"") != std::string::npos);
    CHECK(summary.find("\"jc_variance_sur\"") != std::string::npos);
}

TEST_CASE("numerical blow-up exits with code 3 and keeps the partial trace") {
    fs::path spec = write_spec("hot.json", R"({
      "data": {"classes": 3, "dim": 2, "samples": 90, "separation": 4.0, "seed": 3},
      "game": {
        "budget": 0.5,
        "seed": 11,
        "classifier": {"hidden": [8]},
        "solver": {"epochs": 6, "batch_size": 8, "theta_lr": 1e100}
      },
      "victim": {"epochs": 5}
    })");
    fs::path out = fresh_dir("hot_out");
    RunResult r = run(quote_arg(cli()) + " train-gen --spec " + quote_arg(spec) + " --out " + quote_arg(out),
                      "hot");
    CHECK(r.code == 3);
    CHECK_FALSE(r.err.empty());
    REQUIRE(fs::exists(out / "run.csv"));
    std::string trace = read_text(out / "run.csv");
    CHECK(trace.rfind("step,", 0) == 0);
    CHECK(std::count(trace.begin(), trace.end(), '\n') >= 2);  // header + >= 1 step
    CHECK_FALSE(fs::exists(out / "generator.ckpt"));
}
