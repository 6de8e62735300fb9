#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "stackelgrad/dataset.hpp"
#include "stackelgrad/game_config.hpp"
#include "stackelgrad/models.hpp"

namespace stackelgrad {

// Fraction of `split` rows of `data` the model labels correctly. Computed as
// the negated mean of the discrete accuracy loss, so ties count as incorrect.
double accuracy(const MlpClassifier& model, const LabeledDataset& data, Split split);

// A freshly trained victim with its per-epoch clean-test accuracy curve.
struct TrainedVictim {
    MlpClassifier model;
    std::vector<double> accuracy_curve;  // length == recipe.epochs
};

// Train a fresh classifier from scratch on train_data's train split (which may
// be poisoned) with SGD+momentum; the step size is multiplied by 0.1 at 75%
// and 90% of the epochs. After every epoch the accuracy on eval_data's test
// split (the clean reference) is recorded. Deterministic given the seed.
// Divergence raises SolverError with the epoch index; the curve built so far
// is preserved in *curve_out when given.
TrainedVictim train_victim(const LabeledDataset& train_data, const LabeledDataset& eval_data,
                           const std::vector<std::size_t>& victim_dims, Activation act,
                           const VictimRecipe& recipe, std::uint64_t seed,
                           std::vector<double>* curve_out = nullptr);

// Paired clean/poisoned retraining over replicate seeds. For each seed the
// clean baseline and the poisoned victim share the same initialization and
// batch order, so a zero generator reproduces the clean run bit for bit.
struct EvalReport {
    std::vector<std::uint64_t> seeds;
    std::vector<double> clean_per_seed;
    std::vector<double> poisoned_per_seed;
    std::vector<std::vector<double>> clean_curves;
    std::vector<std::vector<double>> poisoned_curves;
    double clean_accuracy = 0.0;  // mean over seeds
    double clean_sd = 0.0;        // sample standard deviation (0 for one seed)
    double poisoned_accuracy = 0.0;
    double poisoned_sd = 0.0;
    double max_perturbation = 0.0;  // max |x'-x| before any clamp; <= budget exactly

    std::string csv() const;  // one row per seed + a mean row
};

EvalReport evaluate_poison(const PerturbationGenerator& gen, const LabeledDataset& data,
                           const std::vector<std::size_t>& victim_dims, Activation act,
                           const VictimRecipe& recipe, const std::vector<std::uint64_t>& seeds,
                           std::optional<std::pair<double, double>> clip_range = std::nullopt);

double mean_of(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);

}  // namespace stackelgrad
