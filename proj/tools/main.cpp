// Command-line front end. Every run writes a config echo (config.json) into
// its output directory first, so any result can be reproduced bit for bit
// from the directory alone. Exit codes: 0 success, 2 configuration error,
// 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stackelgrad/checkpoint.hpp"
#include "stackelgrad/dataset.hpp"
#include "stackelgrad/errors.hpp"
#include "stackelgrad/experiments.hpp"
#include "stackelgrad/game_config.hpp"
#include "stackelgrad/models.hpp"
#include "stackelgrad/victim.hpp"

namespace {

using nlohmann::json;
using namespace stackelgrad;

constexpr const char* kVersion = STACKELGRAD_VERSION_STRING;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("cannot open for write: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ContractError("short write: " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ContractError("cannot create directory " + dir + ": " + ec.message());
}

std::string path_in(const std::string& dir, const char* name) {
    return (std::filesystem::path(dir) / name).string();
}

// Options shared by every subcommand; each spec-driven command requires
// --spec and --out, poison has its own inputs.
struct Opts {
    std::string spec_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = -1;  // -1 = unset; resolved against STACKELGRAD_JOBS, then 1
    bool quiet = false;

    // poison-only
    std::string checkpoint;
    std::string data_dir;
    std::vector<double> clip;  // empty or {lo, hi}
};

int resolve_jobs(const Opts& o) {
    if (o.jobs != -1) {
        if (o.jobs < 1) throw ConfigError("--jobs: must be >= 1");
        return o.jobs;
    }
    if (const char* env = std::getenv("STACKELGRAD_JOBS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError(std::string("STACKELGRAD_JOBS: invalid value \"") + env + "\"");
        return static_cast<int>(v);
    }
    return 1;
}

SpecDocument load_spec(const Opts& o) {
    SpecDocument doc = load_spec_file(o.spec_path);
    if (o.seed_set) doc.game.solver.seed = o.seed;
    return doc;
}

// The echo is written before any compute so even aborted runs are
// reproducible from their output directory.
void write_echo(const Opts& o, const char* command, const SpecDocument* doc,
                const json& extra = json::object()) {
    ensure_dir(o.out_dir);
    json echo;
    echo["command"] = command;
    echo["version"] = kVersion;
    echo["jobs"] = resolve_jobs(o);
    if (doc) echo["spec"] = json::parse(spec_to_json(*doc));
    for (auto it = extra.begin(); it != extra.end(); ++it) echo[it.key()] = it.value();
    write_file(path_in(o.out_dir, "config.json"), echo.dump(2) + "\n");
}

void say(const Opts& o, const std::string& line) {
    if (!o.quiet) std::cout << line << "\n";
}

json trace_summary(const RunReport& r) {
    json s;
    s["steps"] = r.steps.size();
    if (!r.steps.empty()) {
        const BomeStepTrace& t = r.steps.back();
        s["final"]["j_c"] = t.jc_before;
        s["final"]["j_a"] = t.ja;
        s["final"]["q_hat"] = t.qhat;
        s["final"]["lambda"] = t.lambda;
    }
    return s;
}

json eval_summary(const EvalReport& rep) {
    json s;
    s["seeds"] = rep.seeds;
    s["clean_accuracy"] = rep.clean_accuracy;
    s["clean_sd"] = rep.clean_sd;
    s["poisoned_accuracy"] = rep.poisoned_accuracy;
    s["poisoned_sd"] = rep.poisoned_sd;
    s["max_perturbation"] = rep.max_perturbation;
    return s;
}

void write_summary(const Opts& o, const char* command, json body) {
    body["command"] = command;
    body["version"] = kVersion;
    write_file(path_in(o.out_dir, "summary.json"), body.dump(2) + "\n");
}

std::string curves_csv(const EvalReport& rep) {
    std::string out = "seed,epoch,clean_accuracy,poisoned_accuracy\n";
    char buf[96];
    for (std::size_t s = 0; s < rep.seeds.size(); ++s)
        for (std::size_t e = 0; e < rep.clean_curves[s].size(); ++e) {
            std::snprintf(buf, sizeof(buf), "%llu,%zu,%.17g,%.17g\n",
                          static_cast<unsigned long long>(rep.seeds[s]), e,
                          rep.clean_curves[s][e], rep.poisoned_curves[s][e]);
            out += buf;
        }
    return out;
}

int cmd_train_gen(const Opts& o) {
    SpecDocument doc = load_spec(o);
    write_echo(o, "train-gen", &doc);

    LabeledDataset data = doc.data.make();
    RunReport report;
    PerturbationGenerator gen = [&] {
        try {
            return train_generator(doc.game, data, &report);
        } catch (const SolverError&) {
            // Keep the partial trace: the steps before the failure are the
            // evidence needed to diagnose it.
            write_file(path_in(o.out_dir, "run.csv"), report.csv());
            throw;
        }
    }();

    write_file(path_in(o.out_dir, "run.csv"), report.csv());
    save_generator(gen, path_in(o.out_dir, "generator.ckpt"));
    write_summary(o, "train-gen", trace_summary(report));
    say(o, "trained generator: " + std::to_string(report.steps.size()) + " outer steps");
    return 0;
}

int cmd_poison(const Opts& o) {
    if (!o.clip.empty() && o.clip.size() != 2)
        throw ConfigError("--clip: expected exactly two values, lo hi");

    PerturbationGenerator gen = load_generator(o.checkpoint);
    LabeledDataset data = load_dataset(o.data_dir);
    if (gen.input_dim() != data.dim())
        throw ConfigError("checkpoint dimension " + std::to_string(gen.input_dim()) +
                          " does not match dataset dimension " + std::to_string(data.dim()));

    json extra;
    extra["checkpoint"] = o.checkpoint;
    extra["data"] = o.data_dir;
    if (!o.clip.empty()) extra["clip"] = o.clip;
    write_echo(o, "poison", nullptr, extra);

    std::optional<std::pair<double, double>> clip;
    if (!o.clip.empty()) {
        if (!(o.clip[0] < o.clip[1])) throw ConfigError("--clip: lo must be < hi");
        clip = std::make_pair(o.clip[0], o.clip[1]);
    }

    LabeledDataset poisoned = poison(gen, data, clip);
    // Report the realized displacement of the stored features, not the raw
    // generator output: clipping (and rounding guards) act on the stored rows.
    double max_norm = 0.0;
    for (std::size_t i = 0; i < poisoned.features.data.size(); ++i)
        max_norm = std::max(max_norm,
                            std::abs(poisoned.features.data[i] - data.features.data[i]));
    save_dataset(poisoned, path_in(o.out_dir, "poisoned"));

    json body;
    body["rows"] = poisoned.rows();
    body["budget"] = gen.budget();
    body["max_perturbation"] = max_norm;
    write_summary(o, "poison", body);

    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", max_norm);
    say(o, std::string("max perturbation (l_inf): ") + buf);
    return 0;
}

int cmd_eval(const Opts& o) {
    SpecDocument doc = load_spec(o);
    json extra;
    if (!o.checkpoint.empty()) extra["checkpoint"] = o.checkpoint;
    write_echo(o, "eval", &doc, extra);

    LabeledDataset data = doc.data.make();
    PerturbationGenerator gen = o.checkpoint.empty()
                                    ? train_generator(doc.game, data, nullptr)
                                    : load_generator(o.checkpoint);

    std::vector<std::uint64_t> seeds =
        doc.experiment ? doc.experiment->seeds : std::vector<std::uint64_t>{0, 1, 2};
    EvalReport rep = evaluate_poison(gen, data,
                                     doc.game.classifier_dims(data.dim(), data.num_classes),
                                     doc.game.classifier_activation, doc.victim, seeds,
                                     doc.game.clip_range);

    write_file(path_in(o.out_dir, "eval.csv"), rep.csv());
    write_file(path_in(o.out_dir, "curves.csv"), curves_csv(rep));
    write_summary(o, "eval", eval_summary(rep));

    char buf[128];
    std::snprintf(buf, sizeof(buf), "clean %.4f +- %.4f, poisoned %.4f +- %.4f",
                  rep.clean_accuracy, rep.clean_sd, rep.poisoned_accuracy, rep.poisoned_sd);
    say(o, buf);
    return 0;
}

int cmd_experiment(const Opts& o) {
    SpecDocument doc = load_spec(o);
    if (!doc.experiment)
        throw ConfigError("experiment: spec has no experiment section");
    write_echo(o, "experiment", &doc);
    int jobs = resolve_jobs(o);

    if (doc.experiment->scenario == Scenario::Standard) {
        RatioTable table = ratio_generalization_experiment(doc, jobs);
        write_file(path_in(o.out_dir, "ratio.csv"), table.csv());
        json rows = json::array();
        for (const RatioRow& r : table.rows) {
            json row;
            row["fraction"] = r.fraction;
            row["clean_accuracy"] = r.clean_accuracy;
            row["clean_sd"] = r.clean_sd;
            row["poisoned_accuracy"] = r.poisoned_accuracy;
            row["poisoned_sd"] = r.poisoned_sd;
            rows.push_back(row);
        }
        json body;
        body["scenario"] = "standard";
        body["rows"] = rows;
        write_summary(o, "experiment", body);
        say(o, "ratio table: " + std::to_string(table.rows.size()) + " fractions");
    } else {
        AdvGrid grid = adversarial_game_experiment(doc, jobs);
        write_file(path_in(o.out_dir, "adv_grid.csv"), grid.csv());
        json cells = json::array();
        for (const AdvCell& c : grid.cells) {
            json cell = eval_summary(c.report);
            cell["victim_radius"] = c.victim_radius;
            cells.push_back(cell);
        }
        json body;
        body["scenario"] = "adversarial";
        body["generator_radius"] = grid.generator_radius;
        body["cells"] = cells;
        write_summary(o, "experiment", body);
        say(o, "adversarial grid: " + std::to_string(grid.cells.size()) + " radii");
    }
    return 0;
}

int cmd_diag(const Opts& o) {
    SpecDocument doc = load_spec(o);
    write_echo(o, "diag", &doc);

    AblationResult abl = ablation_diagnostic(doc, 10.0, resolve_jobs(o));
    write_file(path_in(o.out_dir, "trace_ce.csv"), abl.ce.csv());
    write_file(path_in(o.out_dir, "trace_ce_clip.csv"), abl.ce_clip.csv());
    write_file(path_in(o.out_dir, "trace_sur.csv"), abl.sur.csv());

    auto [var_first, var_last] = jc_quartile_variances(abl.sur);
    json body;
    body["clip_value"] = abl.clip_value;
    body["max_grad_ja"]["ce"] = max_grad_ja(abl.ce);
    body["max_grad_ja"]["ce_clip"] = max_grad_ja(abl.ce_clip);
    body["max_grad_ja"]["sur"] = max_grad_ja(abl.sur);
    body["jc_variance_sur"]["first_quartile"] = var_first;
    body["jc_variance_sur"]["last_quartile"] = var_last;
    write_summary(o, "diag", body);
    say(o, "wrote traces: ce, ce_clip, sur");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"poisoning game lab: train perturbation generators, poison "
                 "datasets, evaluate victims, run experiment grids"};
    app.require_subcommand(1);
    Opts o;
    std::vector<CLI::Option*> seed_opts;

    auto add_common = [&](CLI::App* cmd, bool needs_spec) {
        if (needs_spec)
            cmd->add_option("--spec", o.spec_path, "JSON spec file")->required();
        cmd->add_option("--out", o.out_dir, "output directory")->required();
        seed_opts.push_back(cmd->add_option("--seed", o.seed, "override game.seed"));
        cmd->add_option("--jobs", o.jobs, "worker threads (default: STACKELGRAD_JOBS or 1)");
        cmd->add_flag("--quiet", o.quiet, "suppress progress output");
    };

    CLI::App* train = app.add_subcommand("train-gen", "train a perturbation generator");
    add_common(train, true);

    CLI::App* poison = app.add_subcommand("poison", "apply a trained generator to a dataset");
    add_common(poison, false);
    poison->add_option("--checkpoint", o.checkpoint, "generator checkpoint")->required();
    poison->add_option("--data", o.data_dir, "input dataset directory")->required();
    poison->add_option("--clip", o.clip, "clamp poisoned features to [lo, hi]")->expected(2);

    CLI::App* eval = app.add_subcommand("eval", "train victims on poisoned data and report");
    add_common(eval, true);
    eval->add_option("--checkpoint", o.checkpoint,
                     "reuse a trained generator instead of training one");

    CLI::App* experiment = app.add_subcommand("experiment", "run the configured experiment grid");
    add_common(experiment, true);

    CLI::App* diag = app.add_subcommand("diag", "attacker-loss ablation traces");
    add_common(diag, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        for (CLI::Option* s : seed_opts)
            if (s->count() > 0) o.seed_set = true;
        if (train->parsed()) return cmd_train_gen(o);
        if (poison->parsed()) return cmd_poison(o);
        if (eval->parsed()) return cmd_eval(o);
        if (experiment->parsed()) return cmd_experiment(o);
        return cmd_diag(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const SolverError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
