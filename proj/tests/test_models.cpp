#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "stackelgrad/checkpoint.hpp"
#include "stackelgrad/dataset.hpp"
#include "stackelgrad/errors.hpp"
#include "stackelgrad/models.hpp"

using namespace stackelgrad;

namespace {

std::string temp_dir(const char* tag) {
    auto dir = std::filesystem::temp_directory_path() / (std::string("sg_test_") + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("synthetic datasets are reproducible and well-partitioned") {
    LabeledDataset a = make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 300, 4.0, 11);
    LabeledDataset b = make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 300, 4.0, 11);
    CHECK(a.features.data == b.features.data);
    CHECK(a.labels == b.labels);
    CHECK(a.split == b.split);

    CHECK(a.rows() == 300);
    CHECK(a.dim() == 2);
    CHECK(a.num_classes == 3);
    a.validate();

    const auto train = a.indices_of(Split::Train);
    const auto test = a.indices_of(Split::Test);
    const auto holdout = a.indices_of(Split::Holdout);
    CHECK(train.size() + test.size() + holdout.size() == 300);
    CHECK(train.size() == 180);  // 60/20/20 stratified
    CHECK(test.size() == 60);

    // Every class appears in every split.
    for (Split s : {Split::Train, Split::Test, Split::Holdout}) {
        std::set<int> classes;
        for (std::size_t i : a.indices_of(s)) classes.insert(a.labels[i]);
        CHECK(classes.size() == 3);
    }

    LabeledDataset rings = make_synthetic(SyntheticKind::ConcentricRings, 4, 3, 400, 3.0, 5);
    rings.validate();
    CHECK(rings.num_classes == 4);

    // A different seed moves the samples.
    LabeledDataset c = make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 300, 4.0, 12);
    CHECK(a.features.data != c.features.data);
}

TEST_CASE("synthetic dataset preconditions") {
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::GaussianBlobs, 1, 2, 100, 4.0, 0),
                    ContractError);
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 29, 4.0, 0),
                    ContractError);
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 300, -1.0, 0),
                    ContractError);
    CHECK_THROWS_AS(synthetic_kind_from_string("spiral"), ConfigError);
    CHECK(synthetic_kind_from_string("concentric-rings") == SyntheticKind::ConcentricRings);
    CHECK(std::string(to_string(SyntheticKind::GaussianBlobs)) == "gaussian-blobs");
}

TEST_CASE("train_subset takes per-class leading fractions") {
    LabeledDataset d = make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 300, 4.0, 21);

    // Fraction 1.0 is the identity on the train split.
    CHECK(train_subset(d, 1.0) == d.indices_of(Split::Train));

    std::vector<std::size_t> half = train_subset(d, 0.5);
    CHECK(half.size() == 90);  // half of each class's 60 train rows
    CHECK(std::is_sorted(half.begin(), half.end()));
    std::vector<int> per_class(3, 0);
    for (std::size_t i : half) {
        CHECK(d.split[i] == Split::Train);
        ++per_class[static_cast<std::size_t>(d.labels[i])];
    }
    for (int c : per_class) CHECK(c == 30);

    // A tiny fraction still keeps one row of every class.
    std::vector<std::size_t> tiny = train_subset(d, 0.001);
    CHECK(tiny.size() == 3);

    CHECK_THROWS_AS(train_subset(d, 0.0), ContractError);
    CHECK_THROWS_AS(train_subset(d, 1.5), ContractError);
}

TEST_CASE("make_batch materializes the chosen rows") {
    LabeledDataset d = make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 300, 4.0, 3);
    Batch b = make_batch(d, {5, 17, 200});
    CHECK(b.size() == 3);
    CHECK(b.x.shape == std::vector<std::size_t>{3, 2});
    CHECK(b.x.at(1, 0) == d.features.at(17, 0));
    CHECK(b.y[2] == d.labels[200]);
}

TEST_CASE("dataset save/load round trip is bit exact") {
    LabeledDataset d = make_synthetic(SyntheticKind::ConcentricRings, 3, 4, 330, 2.5, 77);
    std::string dir = temp_dir("dataset");
    save_dataset(d, dir);
    LabeledDataset e = load_dataset(dir);
    CHECK(e.features.shape == d.features.shape);
    CHECK(e.features.data == d.features.data);
    CHECK(e.labels == d.labels);
    CHECK(e.split == d.split);
    CHECK(e.num_classes == d.num_classes);

    CHECK_THROWS_AS(load_dataset(dir + "_missing"), ContractError);
}

TEST_CASE("mlp initialization respects fan-in bounds and layout") {
    std::vector<std::size_t> dims{3, 5, 2};
    CHECK(detail_mlp::param_count(dims) == (3 + 1) * 5 + (5 + 1) * 2);

    MlpClassifier m = MlpClassifier::init(dims, Activation::Relu, 42);
    CHECK(m.input_dim() == 3);
    CHECK(m.output_dim() == 2);
    CHECK(m.params().count() == 4);  // W1 b1 W2 b2
    CHECK(m.params()[0].shape == std::vector<std::size_t>{3, 5});
    CHECK(m.params()[1].shape == std::vector<std::size_t>{5});
    CHECK(m.params()[2].shape == std::vector<std::size_t>{5, 2});
    CHECK(m.params()[3].shape == std::vector<std::size_t>{2});

    for (std::size_t layer = 0; layer < 2; ++layer) {
        double bound = 1.0 / std::sqrt(static_cast<double>(dims[layer]));
        for (double v : m.params()[2 * layer].data) CHECK(std::abs(v) <= bound);
        for (double v : m.params()[2 * layer + 1].data) CHECK(std::abs(v) <= bound);
    }

    // Same seed, same parameters; different seed, different parameters.
    MlpClassifier m2 = MlpClassifier::init(dims, Activation::Relu, 42);
    CHECK(m2.params().flatten() == m.params().flatten());
    MlpClassifier m3 = MlpClassifier::init(dims, Activation::Relu, 43);
    CHECK(m3.params().flatten() != m.params().flatten());

    CHECK_THROWS_AS(MlpClassifier::init({4}, Activation::Relu, 0), ContractError);
}

TEST_CASE("classify matches the graph forward pass") {
    MlpClassifier m = MlpClassifier::init({2, 8, 3}, Activation::Tanh, 9);
    Tensor x({5, 2});
    Rng r(1);
    for (double& v : x.data) v = r.uniform(-2, 2);

    Tensor direct = classify(m, x);
    CHECK(direct.shape == std::vector<std::size_t>{5, 3});

    ad::Graph g;
    ad::NodeId logits = m.build(g, g.constant(x), m.param_constants(g));
    CHECK(g.value(logits).data == direct.data);
}

TEST_CASE("generator output is budget-bounded and dimension-checked") {
    PerturbationGenerator gen =
        PerturbationGenerator::init({2, 16, 4}, {4, 16, 2}, 0.25, Activation::Tanh, 17);
    CHECK(gen.input_dim() == 2);
    CHECK(gen.budget() == 0.25);

    Tensor x({40, 2});
    Rng r(2);
    for (double& v : x.data) v = r.uniform(-3, 3);
    Tensor delta = perturb(gen, x);
    CHECK(delta.shape == x.shape);
    CHECK(linf_norm(delta) < 0.25);  // tanh head keeps it strictly inside

    // Architecture contracts: bottleneck continuity, closed output dim,
    // positive budget.
    CHECK_THROWS_AS(PerturbationGenerator::init({2, 4}, {5, 2}, 0.25, Activation::Tanh, 0),
                    ContractError);
    CHECK_THROWS_AS(PerturbationGenerator::init({2, 4}, {4, 3}, 0.25, Activation::Tanh, 0),
                    ContractError);
    CHECK_THROWS_AS(PerturbationGenerator::init({2, 4}, {4, 2}, 0.0, Activation::Tanh, 0),
                    ContractError);
}

TEST_CASE("zero generator perturbs by exactly zero") {
    PerturbationGenerator gen =
        PerturbationGenerator::init({2, 8, 2}, {2, 8, 2}, 0.5, Activation::Tanh, 3);
    gen.params().fill(0.0);
    Tensor x({7, 2});
    Rng r(5);
    for (double& v : x.data) v = r.uniform(-1, 1);
    Tensor delta = perturb(gen, x);
    for (double v : delta.data) CHECK(v == 0.0);
}

TEST_CASE("poison applies the budgeted perturbation and optional clamp") {
    LabeledDataset d = make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 300, 4.0, 13);
    PerturbationGenerator gen =
        PerturbationGenerator::init({2, 16, 4}, {4, 16, 2}, 0.3, Activation::Tanh, 23);

    LabeledDataset p = poison(gen, d);
    CHECK(p.labels == d.labels);
    CHECK(p.split == d.split);
    CHECK(p.features.shape == d.features.shape);
    CHECK(p.features.data != d.features.data);

    double worst = 0.0;
    for (std::size_t i = 0; i < p.features.data.size(); ++i)
        worst = std::max(worst, std::abs(p.features.data[i] - d.features.data[i]));
    CHECK(worst <= 0.3);
    CHECK(worst > 0.0);

    // Clamped poisoning respects the range exactly even at the boundary.
    LabeledDataset narrow = d;
    for (double& v : narrow.features.data) v = std::min(v, 1.0);
    LabeledDataset pc = poison(gen, narrow, std::make_pair(-100.0, 1.0));
    for (double v : pc.features.data) CHECK(v <= 1.0);

    // The input dataset is untouched.
    LabeledDataset d2 = make_synthetic(SyntheticKind::GaussianBlobs, 3, 2, 300, 4.0, 13);
    CHECK(d.features.data == d2.features.data);
}

TEST_CASE("checkpoints round trip bit-exactly") {
    std::string dir = temp_dir("ckpt");

    PerturbationGenerator gen =
        PerturbationGenerator::init({3, 8, 2}, {2, 8, 3}, 0.125, Activation::Tanh, 99);
    std::string gpath = dir + "/gen.ckpt";
    save_generator(gen, gpath);
    PerturbationGenerator loaded = load_generator(gpath);
    CHECK(loaded.encoder_dims() == gen.encoder_dims());
    CHECK(loaded.decoder_dims() == gen.decoder_dims());
    CHECK(loaded.budget() == gen.budget());
    CHECK(loaded.activation() == gen.activation());
    CHECK(loaded.seed() == gen.seed());
    CHECK(loaded.params().flatten() == gen.params().flatten());

    MlpClassifier clf = MlpClassifier::init({3, 6, 4}, Activation::Relu, 7);
    std::string cpath = dir + "/clf.ckpt";
    save_classifier(clf, cpath);
    MlpClassifier cl = load_classifier(cpath);
    CHECK(cl.layer_dims() == clf.layer_dims());
    CHECK(cl.params().flatten() == clf.params().flatten());

    // Kind confusion and corruption are contract errors.
    CHECK_THROWS_AS(load_classifier(gpath), ContractError);
    CHECK_THROWS_AS(load_generator(cpath), ContractError);

    std::string bad = dir + "/bad.ckpt";
    {
        std::FILE* f = std::fopen(bad.c_str(), "wb");
        std::fputs("NOTACKPT", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_generator(bad), ContractError);
    CHECK_THROWS_AS(load_generator(dir + "/missing.ckpt"), ContractError);
}

TEST_CASE("activation names round trip") {
    CHECK(activation_from_string("relu") == Activation::Relu);
    CHECK(activation_from_string("tanh") == Activation::Tanh);
    CHECK_THROWS_AS(activation_from_string("gelu"), ConfigError);
    CHECK(std::string(to_string(Activation::Relu)) == "relu");
}
