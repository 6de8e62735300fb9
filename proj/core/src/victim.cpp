#include "stackelgrad/victim.hpp"

#include <algorithm>
#include <cmath>

#include "io_util.hpp"
#include "stackelgrad/errors.hpp"
#include "stackelgrad/losses.hpp"
#include "stackelgrad/optim.hpp"
#include "stackelgrad/payoffs.hpp"

namespace stackelgrad {

double accuracy(const MlpClassifier& model, const LabeledDataset& data, Split split) {
    std::vector<std::size_t> rows = data.indices_of(split);
    if (rows.empty()) throw ContractError("accuracy: empty split");
    Batch b = make_batch(data, rows);
    Tensor logits = classify(model, b.x);
    std::size_t k = logits.shape[1];
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        Tensor row({k});
        std::copy_n(&logits.data[i * k], k, row.data.begin());
        s += acc_loss(row, b.y[i]);
    }
    return -s / static_cast<double>(b.size());
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

TrainedVictim train_victim(const LabeledDataset& train_data, const LabeledDataset& eval_data,
                           const std::vector<std::size_t>& victim_dims, Activation act,
                           const VictimRecipe& recipe, std::uint64_t seed,
                           std::vector<double>* curve_out) {
    recipe.validate();
    train_data.validate();

    Rng master(seed);
    MlpClassifier model = MlpClassifier::init(victim_dims, act, master.child(0).seed());
    Rng shuffle_rng = master.child(1);

    std::vector<std::size_t> train_idx = train_data.indices_of(Split::Train);
    std::size_t bs = std::min(recipe.batch_size, train_idx.size());

    // step-size schedule: x0.1 at 75% and 90% of the epochs
    int m1 = (3 * recipe.epochs) / 4;
    int m2 = (9 * recipe.epochs) / 10;

    Sgd opt(recipe.lr, recipe.momentum, recipe.weight_decay);
    ParamVector grad = model.params().zeros_like();

    TrainedVictim out;
    out.model = model;
    std::vector<double>& curve = curve_out ? *curve_out : out.accuracy_curve;
    curve.clear();

    for (int epoch = 0; epoch < recipe.epochs; ++epoch) {
        double factor = (epoch >= m1 ? 0.1 : 1.0) * (epoch >= m2 ? 0.1 : 1.0);
        opt.set_lr(recipe.lr * factor);

        std::vector<std::size_t> order = train_idx;
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::size_t end = std::min(start + bs, order.size());
            Batch batch = make_batch(
                train_data,
                std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end)));
            try {
                ad::Graph g;
                std::vector<ad::NodeId> t_nodes =
                    out.model.param_leaves(g, "theta");
                ad::NodeId loss = build::victim_loss_from_input(
                    g, out.model, t_nodes, g.constant(batch.x), batch.y, recipe.loss);
                ad::GradientMap gm = g.backward(loss);
                for (std::size_t i = 0; i < t_nodes.size(); ++i) grad[i] = gm.at(t_nodes[i]);
            } catch (const NumericError& e) {
                throw SolverError(std::string("victim training diverged at epoch ") +
                                      std::to_string(epoch) + ": " + e.what(),
                                  epoch);
            }
            opt.step(out.model.params(), grad);
        }
        try {
            curve.push_back(accuracy(out.model, eval_data, Split::Test));
        } catch (const NumericError& e) {
            throw SolverError(std::string("victim training diverged at epoch ") +
                                  std::to_string(epoch) + ": " + e.what(),
                              epoch);
        }
    }

    if (curve_out) out.accuracy_curve = *curve_out;
    return out;
}

std::string EvalReport::csv() const {
    detail::CsvWriter w({"seed", "clean_accuracy", "poisoned_accuracy"});
    for (std::size_t i = 0; i < seeds.size(); ++i)
        w.append_row({std::to_string(seeds[i]), detail::fmt_double(clean_per_seed[i]),
                      detail::fmt_double(poisoned_per_seed[i])});
    w.append_row({"mean", detail::fmt_double(clean_accuracy), detail::fmt_double(poisoned_accuracy)});
    w.append_row({"sd", detail::fmt_double(clean_sd), detail::fmt_double(poisoned_sd)});
    return w.str();
}

EvalReport evaluate_poison(const PerturbationGenerator& gen, const LabeledDataset& data,
                           const std::vector<std::size_t>& victim_dims, Activation act,
                           const VictimRecipe& recipe, const std::vector<std::uint64_t>& seeds,
                           std::optional<std::pair<double, double>> clip_range) {
    if (seeds.empty()) throw ContractError("evaluate_poison: need at least one seed");
    if (gen.input_dim() != data.dim())
        throw ContractError("evaluate_poison: generator dim does not match the dataset");

    EvalReport rep;
    rep.seeds = seeds;

    // budget audit on the raw perturbation, before any clamp
    Tensor delta = perturb(gen, data.features);
    rep.max_perturbation = linf_norm(delta);
    if (rep.max_perturbation > gen.budget())
        throw ContractError("evaluate_poison: perturbation exceeded the budget");

    LabeledDataset poisoned = poison(gen, data, clip_range);

    for (std::uint64_t s : seeds) {
        TrainedVictim clean = train_victim(data, data, victim_dims, act, recipe, s);
        // identical seed on purpose: a zero generator must reproduce the
        // clean run exactly
        TrainedVictim dirty = train_victim(poisoned, data, victim_dims, act, recipe, s);
        rep.clean_per_seed.push_back(clean.accuracy_curve.back());
        rep.poisoned_per_seed.push_back(dirty.accuracy_curve.back());
        rep.clean_curves.push_back(std::move(clean.accuracy_curve));
        rep.poisoned_curves.push_back(std::move(dirty.accuracy_curve));
    }

    rep.clean_accuracy = mean_of(rep.clean_per_seed);
    rep.clean_sd = sample_sd(rep.clean_per_seed);
    rep.poisoned_accuracy = mean_of(rep.poisoned_per_seed);
    rep.poisoned_sd = sample_sd(rep.poisoned_per_seed);
    return rep;
}

}  // namespace stackelgrad
