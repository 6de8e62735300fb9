// Microbenchmarks for the hot paths: graph forward/backward on the victim
// objective, a PGD inner maximization, bulk dataset poisoning, and one full
// outer solver epoch at the calibrated problem size.

#include <benchmark/benchmark.h>

#include <optional>
#include <vector>

#include "stackelgrad/bome.hpp"
#include "stackelgrad/dataset.hpp"
#include "stackelgrad/game_config.hpp"
#include "stackelgrad/graph.hpp"
#include "stackelgrad/losses.hpp"
#include "stackelgrad/models.hpp"
#include "stackelgrad/payoffs.hpp"

namespace {

using namespace stackelgrad;

LabeledDataset blob_data(std::size_t samples) {
    return make_synthetic(SyntheticKind::GaussianBlobs, 3, 8, samples, 4.0, 7);
}

Batch train_batch(const LabeledDataset& data, std::size_t rows) {
    std::vector<std::size_t> idx = data.indices_of(Split::Train);
    idx.resize(rows);
    return make_batch(data, idx);
}

void bm_victim_loss_backward(benchmark::State& state) {
    LabeledDataset data = blob_data(1200);
    Batch batch = train_batch(data, static_cast<std::size_t>(state.range(0)));
    MlpClassifier clf = MlpClassifier::init({8, 32, 3}, Activation::Relu, 1);
    PerturbationGenerator gen =
        PerturbationGenerator::init({8, 32, 8}, {8, 32, 8}, 2.0, Activation::Tanh, 2);
    LossSpec ce{};
    for (auto _ : state) {
        ad::Graph g;
        std::vector<ad::NodeId> t = clf.param_leaves(g, "t");
        std::vector<ad::NodeId> w = gen.param_leaves(g, "w");
        build::VictimLossBuild vb =
            build::victim_loss_node(g, clf, t, &gen, &w, batch, ce, std::nullopt);
        ad::GradientMap gm = g.backward(vb.loss);
        benchmark::DoNotOptimize(gm.at(t[0]).data.data());
    }
}
BENCHMARK(bm_victim_loss_backward)->Arg(32)->Arg(256);

void bm_pgd_attack(benchmark::State& state) {
    LabeledDataset data = blob_data(1200);
    Batch batch = train_batch(data, 32);
    MlpClassifier clf = MlpClassifier::init({8, 32, 3}, Activation::Relu, 1);
    for (auto _ : state) {
        Tensor adv = pgd_attack(clf, batch.x, batch.y, 0.25, 10, 0.0625,
                                PgdObjective::CrossEntropy);
        benchmark::DoNotOptimize(adv.data.data());
    }
}
BENCHMARK(bm_pgd_attack);

void bm_poison_bulk(benchmark::State& state) {
    LabeledDataset data = blob_data(static_cast<std::size_t>(state.range(0)));
    PerturbationGenerator gen =
        PerturbationGenerator::init({8, 32, 8}, {8, 32, 8}, 2.0, Activation::Tanh, 2);
    for (auto _ : state) {
        LabeledDataset out = poison(gen, data, std::nullopt);
        benchmark::DoNotOptimize(out.features.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_poison_bulk)->Arg(10000)->Arg(100000);

void bm_solver_epoch(benchmark::State& state) {
    GameConfig game;
    game.budget = 2.0;
    game.loss_attacker.kind = LossKind::SUR;
    game.solver.seed = 1;
    game.solver.epochs = 1;
    game.solver.inner_lr = 0.01;
    LabeledDataset data = blob_data(1200);
    for (auto _ : state) {
        PerturbationGenerator gen = train_generator(game, data, nullptr);
        benchmark::DoNotOptimize(gen.params().count());
    }
}
BENCHMARK(bm_solver_epoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
