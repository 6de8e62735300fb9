#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stackelgrad/rng.hpp"
#include "stackelgrad/tensor.hpp"

namespace stackelgrad {

enum class Split : int { Train = 0, Test = 1, Holdout = 2 };

const char* split_name(Split s);

// Sample matrix + integer labels + class count, with a split tag per row.
// Tags partition the rows; every split keeps at least one row of each class.
struct LabeledDataset {
    Tensor features;          // m x n
    std::vector<int> labels;  // in [0, num_classes)
    int num_classes = 0;
    std::vector<Split> split;  // one tag per row

    std::size_t rows() const { return labels.size(); }
    std::size_t dim() const { return features.shape.size() == 2 ? features.shape[1] : 0; }

    std::vector<std::size_t> indices_of(Split s) const;

    // Internal consistency: shapes, label range, split partition, per-class
    // presence in every split. Throws ContractError on violation.
    void validate() const;
};

// One mini-batch view materialized as dense tensors.
struct Batch {
    Tensor x;            // b x n
    std::vector<int> y;  // b labels
    std::size_t size() const { return y.size(); }
};

Batch make_batch(const LabeledDataset& data, const std::vector<std::size_t>& rows);

enum class SyntheticKind { GaussianBlobs, ConcentricRings };

SyntheticKind synthetic_kind_from_string(const std::string& s);
const char* to_string(SyntheticKind k);

// Reproducible synthetic classification task with a stratified 60/20/20
// train/test/holdout split. `separation` controls class distinguishability:
// blobs put class means `separation` apart (unit isotropic noise), rings space
// the shell radii by `separation` (unit radial noise). separation 0 makes the
// classes indistinguishable.
LabeledDataset make_synthetic(SyntheticKind kind, int num_classes, std::size_t dim,
                              std::size_t samples, double separation, std::uint64_t seed);

// Per-class leading fraction of the train split, in original row order.
// fraction 1.0 returns every train row unchanged, so downstream results are
// bit-identical to using the train split directly.
std::vector<std::size_t> train_subset(const LabeledDataset& data, double fraction);

// Directory format: meta.json (classes, dim, rows, splits) + features.csv
// (one row per sample, full precision) + labels.csv (one label per line).
void save_dataset(const LabeledDataset& data, const std::string& dir);
LabeledDataset load_dataset(const std::string& dir);

}  // namespace stackelgrad
