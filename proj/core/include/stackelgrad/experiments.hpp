#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stackelgrad/bome.hpp"
#include "stackelgrad/game_config.hpp"
#include "stackelgrad/victim.hpp"

namespace stackelgrad {

// A dataset whose train split is restricted to `keep_train` rows (other train
// rows are dropped; test/holdout rows are kept). Row order is preserved, so
// keeping every train row returns an identical dataset.
LabeledDataset restrict_train_rows(const LabeledDataset& data,
                                   const std::vector<std::size_t>& keep_train);

// Generator generalization vs training fraction: for each fraction p the
// generator is trained on a p-subset of the train split, the FULL train split
// is poisoned (unseen rows included), and fresh victims are retrained.
struct RatioRow {
    double fraction = 0.0;
    double clean_accuracy = 0.0;
    double clean_sd = 0.0;
    double poisoned_accuracy = 0.0;
    double poisoned_sd = 0.0;
};

struct RatioTable {
    std::vector<RatioRow> rows;
    std::string csv() const;
};

RatioTable ratio_generalization_experiment(const SpecDocument& spec, int jobs);

// Adversarial-training grid: one generator trained against a robust victim at
// the game's radius, evaluated against victims adversarially trained at each
// grid radius (radius 0 is plain training).
struct AdvCell {
    double victim_radius = 0.0;
    EvalReport report;
};

struct AdvGrid {
    double generator_radius = 0.0;
    std::vector<AdvCell> cells;
    std::string csv() const;
};

AdvGrid adversarial_game_experiment(const SpecDocument& spec, int jobs);

// Loss ablation: three runs differing only in the attacker loss and the
// gradient clip — plain CE, CE with the attacker gradient norm capped, and
// the bounded surrogate.
struct AblationResult {
    RunReport ce;
    RunReport ce_clip;
    RunReport sur;
    double clip_value = 0.0;
};

AblationResult ablation_diagnostic(const SpecDocument& spec, double clip_value = 10.0,
                                   int jobs = 1);

// Variance of the lower-objective trace over the first and last quarter of
// the steps; a stabilizing run has the latter below the former.
std::pair<double, double> jc_quartile_variances(const RunReport& report);

// Largest per-step attacker gradient norm in a trace.
double max_grad_ja(const RunReport& report);

}  // namespace stackelgrad
