#include "stackelgrad/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "io_util.hpp"
#include "parallel.hpp"
#include "stackelgrad/errors.hpp"

namespace stackelgrad {

namespace {

std::string fmt_acc(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

const ExperimentSpec& experiment_of(const SpecDocument& spec, const char* who) {
    if (!spec.experiment)
        throw ContractError(std::string(who) + ": spec has no experiment section");
    return *spec.experiment;
}

// Every experiment starts by retraining clean victims and asserting the
// baseline floor; a poison result against a model that cannot learn the clean
// task means nothing.
double assert_clean_baseline(const LabeledDataset& data, const SpecDocument& spec,
                             const VictimRecipe& recipe) {
    const ExperimentSpec& ex = *spec.experiment;
    std::vector<std::size_t> dims =
        spec.game.classifier_dims(data.dim(), data.num_classes);
    std::vector<double> accs;
    accs.reserve(ex.seeds.size());
    for (std::uint64_t seed : ex.seeds) {
        TrainedVictim v = train_victim(data, data, dims, spec.game.classifier_activation,
                                       recipe, seed);
        accs.push_back(v.accuracy_curve.back());
    }
    double mean = mean_of(accs);
    if (mean < ex.clean_floor)
        throw ContractError("clean baseline accuracy " + fmt_acc(mean) +
                            " is below the configured floor " + fmt_acc(ex.clean_floor));
    return mean;
}

}  // namespace

LabeledDataset restrict_train_rows(const LabeledDataset& data,
                                   const std::vector<std::size_t>& keep_train) {
    std::vector<char> keep(data.rows(), 0);
    for (std::size_t r : keep_train) {
        if (r >= data.rows())
            throw ContractError("restrict_train_rows: row index out of range");
        if (data.split[r] != Split::Train)
            throw ContractError("restrict_train_rows: row " + std::to_string(r) +
                                " is not a train row");
        keep[r] = 1;
    }

    std::vector<std::size_t> rows;
    rows.reserve(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r)
        if (data.split[r] != Split::Train || keep[r]) rows.push_back(r);

    std::size_t n = data.dim();
    LabeledDataset out;
    out.num_classes = data.num_classes;
    out.features = Tensor({rows.size(), n});
    out.labels.resize(rows.size());
    out.split.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(&data.features.data[rows[i] * n], n, &out.features.data[i * n]);
        out.labels[i] = data.labels[rows[i]];
        out.split[i] = data.split[rows[i]];
    }
    out.validate();
    return out;
}

std::string RatioTable::csv() const {
    detail::CsvWriter w(
        {"fraction", "clean_accuracy", "clean_sd", "poisoned_accuracy", "poisoned_sd"});
    for (const RatioRow& r : rows)
        w.append_row({detail::fmt_double(r.fraction), detail::fmt_double(r.clean_accuracy),
                      detail::fmt_double(r.clean_sd), detail::fmt_double(r.poisoned_accuracy),
                      detail::fmt_double(r.poisoned_sd)});
    return w.str();
}

RatioTable ratio_generalization_experiment(const SpecDocument& spec, int jobs) {
    const ExperimentSpec& ex = experiment_of(spec, "ratio_generalization_experiment");
    if (ex.fractions.empty())
        throw ContractError("ratio_generalization_experiment: no fractions configured");

    LabeledDataset data = spec.data.make();
    assert_clean_baseline(data, spec, spec.victim);

    std::vector<std::size_t> dims = spec.game.classifier_dims(data.dim(), data.num_classes);

    RatioTable table;
    table.rows.resize(ex.fractions.size());
    // Each cell is self-contained: its generator sees only the fraction's
    // train rows, but the poison is applied to the full train split so unseen
    // rows count against the generator.
    detail::parallel_for(ex.fractions.size(), jobs, [&](std::size_t i) {
        double p = ex.fractions[i];
        LabeledDataset sub = restrict_train_rows(data, train_subset(data, p));
        PerturbationGenerator gen = train_generator(spec.game, sub, nullptr);
        EvalReport rep = evaluate_poison(gen, data, dims, spec.game.classifier_activation,
                                         spec.victim, ex.seeds, spec.game.clip_range);
        table.rows[i] = {p, rep.clean_accuracy, rep.clean_sd, rep.poisoned_accuracy,
                         rep.poisoned_sd};
    });
    return table;
}

std::string AdvGrid::csv() const {
    detail::CsvWriter w({"victim_radius", "generator_radius", "clean_accuracy", "clean_sd",
                         "poisoned_accuracy", "poisoned_sd"});
    for (const AdvCell& c : cells)
        w.append_row({detail::fmt_double(c.victim_radius), detail::fmt_double(generator_radius),
                      detail::fmt_double(c.report.clean_accuracy),
                      detail::fmt_double(c.report.clean_sd),
                      detail::fmt_double(c.report.poisoned_accuracy),
                      detail::fmt_double(c.report.poisoned_sd)});
    return w.str();
}

AdvGrid adversarial_game_experiment(const SpecDocument& spec, int jobs) {
    const ExperimentSpec& ex = experiment_of(spec, "adversarial_game_experiment");
    if (ex.adv_radii.empty())
        throw ContractError("adversarial_game_experiment: no victim radii configured");

    LabeledDataset data = spec.data.make();

    // Gate at radius 0: plain training on clean data must clear the floor
    // before robust variants are compared against it.
    VictimRecipe gate = spec.victim;
    gate.loss.adv_radius = 0.0;
    assert_clean_baseline(data, spec, gate);

    std::vector<std::size_t> dims = spec.game.classifier_dims(data.dim(), data.num_classes);
    PerturbationGenerator gen = train_generator(spec.game, data, nullptr);

    AdvGrid grid;
    grid.generator_radius = spec.game.loss_victim.adv_radius;
    grid.cells.resize(ex.adv_radii.size());
    detail::parallel_for(ex.adv_radii.size(), jobs, [&](std::size_t i) {
        VictimRecipe recipe = spec.victim;
        recipe.loss.adv_radius = ex.adv_radii[i];
        grid.cells[i].victim_radius = ex.adv_radii[i];
        grid.cells[i].report = evaluate_poison(gen, data, dims, spec.game.classifier_activation,
                                               recipe, ex.seeds, spec.game.clip_range);
    });
    return grid;
}

AblationResult ablation_diagnostic(const SpecDocument& spec, double clip_value, int jobs) {
    if (!(clip_value > 0.0))
        throw ContractError("ablation_diagnostic: clip value must be > 0");

    LabeledDataset data = spec.data.make();

    AblationResult out;
    out.clip_value = clip_value;

    // Three runs on identical seeds and schedules; only the attacker loss and
    // the gradient cap differ.
    GameConfig ce = spec.game;
    ce.loss_attacker = LossSpec{};
    ce.loss_attacker.kind = LossKind::CE;
    ce.solver.grad_clip_attacker = 0.0;

    GameConfig ce_clip = ce;
    ce_clip.solver.grad_clip_attacker = clip_value;

    GameConfig sur = ce;
    sur.loss_attacker.kind = LossKind::SUR;

    const GameConfig* cfgs[3] = {&ce, &ce_clip, &sur};
    RunReport* reports[3] = {&out.ce, &out.ce_clip, &out.sur};
    detail::parallel_for(3, jobs,
                         [&](std::size_t i) { train_generator(*cfgs[i], data, reports[i]); });
    return out;
}

std::pair<double, double> jc_quartile_variances(const RunReport& report) {
    std::size_t n = report.steps.size();
    std::size_t q = n / 4;
    if (q < 2)
        throw ContractError("trace too short for quartile statistics (need >= 8 steps, have " +
                            std::to_string(n) + ")");
    std::vector<double> first, last;
    first.reserve(q);
    last.reserve(q);
    for (std::size_t i = 0; i < q; ++i) first.push_back(report.steps[i].jc_before);
    for (std::size_t i = n - q; i < n; ++i) last.push_back(report.steps[i].jc_before);
    double sf = sample_sd(first);
    double sl = sample_sd(last);
    return {sf * sf, sl * sl};
}

double max_grad_ja(const RunReport& report) {
    if (report.steps.empty()) throw ContractError("max_grad_ja: empty trace");
    double m = 0.0;
    for (const BomeStepTrace& s : report.steps) m = std::max(m, s.grad_ja_norm);
    return m;
}

}  // namespace stackelgrad
