#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stackelgrad/bome.hpp"
#include "stackelgrad/dataset.hpp"
#include "stackelgrad/models.hpp"
#include "stackelgrad/payoffs.hpp"

namespace stackelgrad {

// Synthetic task description (the "data" section of a spec file).
struct DataConfig {
    SyntheticKind kind = SyntheticKind::GaussianBlobs;
    int classes = 3;
    std::size_t dim = 2;
    std::size_t samples = 0;
    double separation = 4.0;
    std::uint64_t seed = 0;

    void validate() const;
    LabeledDataset make() const;
};

// All hyperparameters of one game instance: the budget, both players'
// architectures, the loss selections, and the solver schedule.
struct GameConfig {
    double budget = 0.0;  // poison radius; required and > 0

    std::vector<std::size_t> classifier_hidden = {32};
    Activation classifier_activation = Activation::Relu;

    std::vector<std::size_t> encoder_hidden = {32};
    std::size_t bottleneck = 8;
    std::vector<std::size_t> decoder_hidden = {32};
    Activation generator_activation = Activation::Tanh;

    LossSpec loss_victim;    // CE | ADV | TRADES
    LossSpec loss_attacker;  // SUR | CE | CW

    BomeConfig solver;

    std::optional<std::pair<double, double>> clip_range;

    // The attacker payoff's clean batch: the victim's mini-batch (default) or
    // an independently drawn one.
    bool disjoint_attacker_batch = false;

    // Best-response tolerance; recorded for reporting, never enforced.
    double eta_br = 0.0;

    void validate() const;

    std::vector<std::size_t> classifier_dims(std::size_t input_dim, int classes) const;
    std::vector<std::size_t> encoder_dims(std::size_t input_dim) const;
    std::vector<std::size_t> decoder_dims(std::size_t input_dim) const;
};

// Victim retraining recipe for evaluation: SGD with momentum, step size
// multiplied by 0.1 at 75% and 90% of the epochs.
struct VictimRecipe {
    int epochs = 30;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 32;
    LossSpec loss;  // CE | ADV | TRADES

    void validate() const;
};

enum class Scenario { Standard, Adversarial };

Scenario scenario_from_string(const std::string& s);
const char* to_string(Scenario s);

// Experiment-suite parameters (the optional "experiment" section).
struct ExperimentSpec {
    Scenario scenario = Scenario::Standard;
    std::vector<double> fractions;      // ratio experiment, ascending in (0,1]
    std::vector<std::uint64_t> seeds;   // replicate seeds, >= 1 entry
    std::vector<double> adv_radii;      // adversarial grid; must include 0
    double clean_floor = 0.9;           // clean-baseline gate, in (0, 1]

    void validate() const;
};

// One spec file drives every command: data + game + victim recipe + optional
// experiment section.
struct SpecDocument {
    DataConfig data;
    GameConfig game;
    VictimRecipe victim;
    std::optional<ExperimentSpec> experiment;
};

// Parse and fully validate a spec document. Errors are ConfigError with the
// offending field path in the message (e.g. "game.budget").
SpecDocument parse_spec_json(const std::string& json_text);
SpecDocument load_spec_file(const std::string& path);

// Canonical serialization (sorted keys, round-trippable floats): the config
// echo written next to every output.
std::string spec_to_json(const SpecDocument& doc);

}  // namespace stackelgrad
