#include "stackelgrad/game_config.hpp"

#include <algorithm>

#include "io_util.hpp"
#include "json.hpp"
#include "stackelgrad/errors.hpp"

namespace stackelgrad {

using nlohmann::json;

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

void DataConfig::validate() const {
    if (classes < 2) throw ConfigError("data.classes: need at least 2");
    if (dim < 1) throw ConfigError("data.dim: must be >= 1");
    if (samples < 10 * static_cast<std::size_t>(classes))
        throw ConfigError("data.samples: need at least 10 samples per class (got " +
                          std::to_string(samples) + " for " + std::to_string(classes) +
                          " classes)");
    if (separation < 0.0) throw ConfigError("data.separation: must be >= 0");
}

LabeledDataset DataConfig::make() const {
    validate();
    return make_synthetic(kind, classes, dim, samples, separation, seed);
}

std::vector<std::size_t> GameConfig::classifier_dims(std::size_t input_dim, int classes) const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), classifier_hidden.begin(), classifier_hidden.end());
    dims.push_back(static_cast<std::size_t>(classes));
    return dims;
}

std::vector<std::size_t> GameConfig::encoder_dims(std::size_t input_dim) const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), encoder_hidden.begin(), encoder_hidden.end());
    dims.push_back(bottleneck);
    return dims;
}

std::vector<std::size_t> GameConfig::decoder_dims(std::size_t input_dim) const {
    std::vector<std::size_t> dims{bottleneck};
    dims.insert(dims.end(), decoder_hidden.begin(), decoder_hidden.end());
    dims.push_back(input_dim);
    return dims;
}

void GameConfig::validate() const {
    if (!(budget > 0.0)) throw ConfigError("game.budget: must be > 0");
    for (std::size_t d : classifier_hidden)
        if (d == 0) throw ConfigError("game.classifier.hidden: zero-width layer");
    for (std::size_t d : encoder_hidden)
        if (d == 0) throw ConfigError("game.generator.encoder_hidden: zero-width layer");
    for (std::size_t d : decoder_hidden)
        if (d == 0) throw ConfigError("game.generator.decoder_hidden: zero-width layer");
    if (bottleneck == 0) throw ConfigError("game.generator.bottleneck: must be >= 1");

    if (loss_victim.kind != LossKind::CE && loss_victim.kind != LossKind::ADV &&
        loss_victim.kind != LossKind::TRADES)
        throw ConfigError(std::string("game.loss_victim.kind: ") + to_string(loss_victim.kind) +
                          " is not a victim training loss (expected ce, adv or trades)");
    // The solver differentiates the attacker loss; the discrete ACC kind has
    // no usable gradient and is evaluation-only.
    if (loss_attacker.kind != LossKind::SUR && loss_attacker.kind != LossKind::CE &&
        loss_attacker.kind != LossKind::CW)
        throw ConfigError(std::string("game.loss_attacker.kind: ") + to_string(loss_attacker.kind) +
                          " is not a trainable attacker loss (expected sur, ce or cw)");
    try {
        loss_victim.validate(true);  // solver-side: robust kinds need a real radius
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("game.loss_victim: ") + e.what());
    }
    solver.validate();
    if (clip_range && !(clip_range->first < clip_range->second))
        throw ConfigError("game.clip: lo must be < hi");
    if (eta_br < 0.0) throw ConfigError("game.eta_br: must be >= 0");
}

void VictimRecipe::validate() const {
    if (epochs < 1) throw ConfigError("victim.epochs: must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("victim.lr: must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("victim.momentum: must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("victim.weight_decay: must be >= 0");
    if (batch_size < 1) throw ConfigError("victim.batch_size: must be >= 1");
    if (loss.kind != LossKind::CE && loss.kind != LossKind::ADV && loss.kind != LossKind::TRADES)
        throw ConfigError(std::string("victim.loss.kind: ") + to_string(loss.kind) +
                          " is not a victim training loss (expected ce, adv or trades)");
    try {
        loss.validate(false);  // evaluation-side: radius 0 is the standard row
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("victim.loss: ") + e.what());
    }
}

Scenario scenario_from_string(const std::string& s) {
    if (s == "standard") return Scenario::Standard;
    if (s == "adversarial") return Scenario::Adversarial;
    throw ConfigError("unknown scenario \"" + s + "\" (expected standard or adversarial)");
}

const char* to_string(Scenario s) {
    return s == Scenario::Standard ? "standard" : "adversarial";
}

void ExperimentSpec::validate() const {
    if (seeds.empty()) throw ConfigError("experiment.seeds: need at least one replicate seed");
    if (!(clean_floor > 0.0) || clean_floor > 1.0)
        throw ConfigError("experiment.clean_floor: must be in (0, 1]");
    for (double f : fractions)
        if (!(f > 0.0) || f > 1.0)
            throw ConfigError("experiment.fractions: every fraction must be in (0, 1]");
    if (!std::is_sorted(fractions.begin(), fractions.end()))
        throw ConfigError("experiment.fractions: must be sorted ascending");
    if (scenario == Scenario::Adversarial) {
        if (adv_radii.empty())
            throw ConfigError("experiment.adv_radii: required for the adversarial scenario");
        if (std::find(adv_radii.begin(), adv_radii.end(), 0.0) == adv_radii.end())
            throw ConfigError("experiment.adv_radii: must include 0 (the standard-training row)");
        for (double r : adv_radii)
            if (r < 0.0) throw ConfigError("experiment.adv_radii: radii must be >= 0");
    }
}

// ---------------------------------------------------------------------------
// JSON field access with path-carrying errors
// ---------------------------------------------------------------------------
namespace {

std::string join(const std::string& path, const char* key) {
    return path.empty() ? key : path + "." + key;
}

const json& child(const json& j, const std::string& path, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(join(path, key) + ": missing required field");
    return *it;
}

template <typename T>
T field(const json& j, const std::string& path, const char* key) {
    try {
        return child(j, path, key).get<T>();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(join(path, key) + ": wrong type");
    }
}

template <typename T>
T field_or(const json& j, const std::string& path, const char* key, T def) {
    if (j.find(key) == j.end()) return def;
    return field<T>(j, path, key);
}

void reject_unknown(const json& j, const std::string& path,
                    std::initializer_list<const char*> known) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(join(path, it.key().c_str()) + ": unknown field");
    }
}

LossSpec parse_loss(const json& j, const std::string& path) {
    reject_unknown(j, path, {"kind", "adv_radius", "trades_lambda", "pgd_steps", "pgd_step_size"});
    LossSpec spec;
    spec.kind = loss_kind_from_string(field<std::string>(j, path, "kind"));
    spec.adv_radius = field_or<double>(j, path, "adv_radius", 0.0);
    spec.trades_lambda = field_or<double>(j, path, "trades_lambda", 1.0);
    spec.pgd.steps = field_or<int>(j, path, "pgd_steps", 10);
    spec.pgd.step_size = field_or<double>(j, path, "pgd_step_size", 0.0);
    return spec;
}

json loss_to_json(const LossSpec& s) {
    json j;
    j["kind"] = to_string(s.kind);
    j["adv_radius"] = s.adv_radius;
    j["trades_lambda"] = s.trades_lambda;
    j["pgd_steps"] = s.pgd.steps;
    j["pgd_step_size"] = s.pgd.step_size;
    return j;
}

DataConfig parse_data(const json& j) {
    reject_unknown(j, "data", {"kind", "classes", "dim", "samples", "separation", "seed"});
    DataConfig d;
    d.kind = synthetic_kind_from_string(field_or<std::string>(j, "data", "kind", "gaussian-blobs"));
    d.classes = field_or<int>(j, "data", "classes", 3);
    d.dim = field_or<std::size_t>(j, "data", "dim", 2);
    d.samples = field<std::size_t>(j, "data", "samples");
    d.separation = field_or<double>(j, "data", "separation", 4.0);
    d.seed = field_or<std::uint64_t>(j, "data", "seed", 0);
    return d;
}

GameConfig parse_game(const json& j) {
    reject_unknown(j, "game",
                   {"budget", "seed", "classifier", "generator", "loss_victim", "loss_attacker",
                    "solver", "clip", "attacker_batch", "eta_br"});
    GameConfig g;
    g.budget = field<double>(j, "game", "budget");
    g.solver.seed = field_or<std::uint64_t>(j, "game", "seed", 0);

    if (auto it = j.find("classifier"); it != j.end()) {
        reject_unknown(*it, "game.classifier", {"hidden", "activation"});
        g.classifier_hidden =
            field_or<std::vector<std::size_t>>(*it, "game.classifier", "hidden", {32});
        g.classifier_activation = activation_from_string(
            field_or<std::string>(*it, "game.classifier", "activation", "relu"));
    }
    if (auto it = j.find("generator"); it != j.end()) {
        reject_unknown(*it, "game.generator",
                       {"encoder_hidden", "bottleneck", "decoder_hidden", "activation"});
        g.encoder_hidden =
            field_or<std::vector<std::size_t>>(*it, "game.generator", "encoder_hidden", {32});
        g.bottleneck = field_or<std::size_t>(*it, "game.generator", "bottleneck", 8);
        g.decoder_hidden =
            field_or<std::vector<std::size_t>>(*it, "game.generator", "decoder_hidden", {32});
        g.generator_activation = activation_from_string(
            field_or<std::string>(*it, "game.generator", "activation", "tanh"));
    }

    if (auto it = j.find("loss_victim"); it != j.end())
        g.loss_victim = parse_loss(*it, "game.loss_victim");
    else
        g.loss_victim = LossSpec{LossKind::CE, 0.0, 1.0, {}};
    if (auto it = j.find("loss_attacker"); it != j.end())
        g.loss_attacker = parse_loss(*it, "game.loss_attacker");
    else
        g.loss_attacker = LossSpec{LossKind::SUR, 0.0, 1.0, {}};

    if (auto it = j.find("solver"); it != j.end()) {
        reject_unknown(*it, "game.solver",
                       {"inner_steps", "inner_lr", "theta_lr", "w_lr", "rho", "inner_optimizer",
                        "epochs", "batch_size", "grad_clip_attacker"});
        g.solver.inner_steps = field_or<int>(*it, "game.solver", "inner_steps", 10);
        g.solver.inner_lr = field_or<double>(*it, "game.solver", "inner_lr", 1e-3);
        g.solver.theta_lr = field_or<double>(*it, "game.solver", "theta_lr", 0.01);
        g.solver.w_lr = field_or<double>(*it, "game.solver", "w_lr", 0.1);
        g.solver.rho = field_or<double>(*it, "game.solver", "rho", 1.5);
        std::string opt = field_or<std::string>(*it, "game.solver", "inner_optimizer", "adam");
        if (opt == "adam")
            g.solver.inner_optimizer = BomeConfig::InnerOpt::Adam;
        else if (opt == "gd")
            g.solver.inner_optimizer = BomeConfig::InnerOpt::Gd;
        else
            throw ConfigError("game.solver.inner_optimizer: unknown value \"" + opt +
                              "\" (expected adam or gd)");
        g.solver.epochs = field_or<int>(*it, "game.solver", "epochs", 1);
        g.solver.batch_size = field_or<std::size_t>(*it, "game.solver", "batch_size", 32);
        g.solver.grad_clip_attacker =
            field_or<double>(*it, "game.solver", "grad_clip_attacker", 0.0);
    }

    if (auto it = j.find("clip"); it != j.end()) {
        reject_unknown(*it, "game.clip", {"lo", "hi"});
        g.clip_range = std::make_pair(field<double>(*it, "game.clip", "lo"),
                                      field<double>(*it, "game.clip", "hi"));
    }

    std::string ab = field_or<std::string>(j, "game", "attacker_batch", "same");
    if (ab == "same")
        g.disjoint_attacker_batch = false;
    else if (ab == "disjoint")
        g.disjoint_attacker_batch = true;
    else
        throw ConfigError("game.attacker_batch: unknown value \"" + ab +
                          "\" (expected same or disjoint)");

    g.eta_br = field_or<double>(j, "game", "eta_br", 0.0);
    return g;
}

VictimRecipe parse_victim(const json& j) {
    reject_unknown(j, "victim", {"epochs", "lr", "momentum", "weight_decay", "batch_size", "loss"});
    VictimRecipe v;
    v.epochs = field_or<int>(j, "victim", "epochs", 30);
    v.lr = field_or<double>(j, "victim", "lr", 0.01);
    v.momentum = field_or<double>(j, "victim", "momentum", 0.9);
    v.weight_decay = field_or<double>(j, "victim", "weight_decay", 5e-4);
    v.batch_size = field_or<std::size_t>(j, "victim", "batch_size", 32);
    if (auto it = j.find("loss"); it != j.end())
        v.loss = parse_loss(*it, "victim.loss");
    else
        v.loss = LossSpec{LossKind::CE, 0.0, 1.0, {}};
    return v;
}

ExperimentSpec parse_experiment(const json& j) {
    reject_unknown(j, "experiment", {"scenario", "fractions", "seeds", "adv_radii", "clean_floor"});
    ExperimentSpec e;
    e.scenario =
        scenario_from_string(field_or<std::string>(j, "experiment", "scenario", "standard"));
    e.fractions = field_or<std::vector<double>>(j, "experiment", "fractions", {});
    e.seeds = field_or<std::vector<std::uint64_t>>(j, "experiment", "seeds", {0, 1, 2});
    e.adv_radii = field_or<std::vector<double>>(j, "experiment", "adv_radii", {});
    e.clean_floor = field_or<double>(j, "experiment", "clean_floor", 0.9);
    return e;
}

}  // namespace

SpecDocument parse_spec_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("spec: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("spec: top level must be a JSON object");
    reject_unknown(j, "", {"data", "game", "victim", "experiment"});

    SpecDocument doc;
    doc.data = parse_data(child(j, "", "data"));
    doc.game = parse_game(child(j, "", "game"));
    if (auto it = j.find("victim"); it != j.end()) doc.victim = parse_victim(*it);
    if (auto it = j.find("experiment"); it != j.end())
        doc.experiment = parse_experiment(*it);

    doc.data.validate();
    doc.game.validate();
    doc.victim.validate();
    if (doc.experiment) {
        doc.experiment->validate();
        if (doc.experiment->scenario == Scenario::Adversarial &&
            doc.game.loss_victim.kind != LossKind::TRADES)
            throw ConfigError(
                "experiment.scenario: the adversarial scenario trains the generator against a "
                "trades victim; set game.loss_victim.kind to \"trades\"");
    }
    return doc;
}

SpecDocument load_spec_file(const std::string& path) {
    std::string text;
    try {
        text = detail::read_file(path);
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
    return parse_spec_json(text);
}

std::string spec_to_json(const SpecDocument& doc) {
    json j;
    j["data"]["kind"] = to_string(doc.data.kind);
    j["data"]["classes"] = doc.data.classes;
    j["data"]["dim"] = doc.data.dim;
    j["data"]["samples"] = doc.data.samples;
    j["data"]["separation"] = doc.data.separation;
    j["data"]["seed"] = doc.data.seed;

    json& g = j["game"];
    g["budget"] = doc.game.budget;
    g["seed"] = doc.game.solver.seed;
    g["classifier"]["hidden"] = doc.game.classifier_hidden;
    g["classifier"]["activation"] = to_string(doc.game.classifier_activation);
    g["generator"]["encoder_hidden"] = doc.game.encoder_hidden;
    g["generator"]["bottleneck"] = doc.game.bottleneck;
    g["generator"]["decoder_hidden"] = doc.game.decoder_hidden;
    g["generator"]["activation"] = to_string(doc.game.generator_activation);
    g["loss_victim"] = loss_to_json(doc.game.loss_victim);
    g["loss_attacker"] = loss_to_json(doc.game.loss_attacker);
    g["solver"]["inner_steps"] = doc.game.solver.inner_steps;
    g["solver"]["inner_lr"] = doc.game.solver.inner_lr;
    g["solver"]["theta_lr"] = doc.game.solver.theta_lr;
    g["solver"]["w_lr"] = doc.game.solver.w_lr;
    g["solver"]["rho"] = doc.game.solver.rho;
    g["solver"]["inner_optimizer"] =
        doc.game.solver.inner_optimizer == BomeConfig::InnerOpt::Adam ? "adam" : "gd";
    g["solver"]["epochs"] = doc.game.solver.epochs;
    g["solver"]["batch_size"] = doc.game.solver.batch_size;
    g["solver"]["grad_clip_attacker"] = doc.game.solver.grad_clip_attacker;
    if (doc.game.clip_range) {
        g["clip"]["lo"] = doc.game.clip_range->first;
        g["clip"]["hi"] = doc.game.clip_range->second;
    }
    g["attacker_batch"] = doc.game.disjoint_attacker_batch ? "disjoint" : "same";
    g["eta_br"] = doc.game.eta_br;

    j["victim"]["epochs"] = doc.victim.epochs;
    j["victim"]["lr"] = doc.victim.lr;
    j["victim"]["momentum"] = doc.victim.momentum;
    j["victim"]["weight_decay"] = doc.victim.weight_decay;
    j["victim"]["batch_size"] = doc.victim.batch_size;
    j["victim"]["loss"] = loss_to_json(doc.victim.loss);

    if (doc.experiment) {
        j["experiment"]["scenario"] = to_string(doc.experiment->scenario);
        j["experiment"]["fractions"] = doc.experiment->fractions;
        j["experiment"]["seeds"] = doc.experiment->seeds;
        j["experiment"]["adv_radii"] = doc.experiment->adv_radii;
        j["experiment"]["clean_floor"] = doc.experiment->clean_floor;
    }

    return j.dump(2) + "\n";
}

}  // namespace stackelgrad
