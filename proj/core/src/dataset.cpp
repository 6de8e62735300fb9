#include "stackelgrad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "io_util.hpp"
#include "json.hpp"
#include "stackelgrad/errors.hpp"

namespace stackelgrad {

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Test: return "test";
        case Split::Holdout: return "holdout";
    }
    return "?";
}

std::vector<std::size_t> LabeledDataset::indices_of(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) idx.push_back(i);
    return idx;
}

void LabeledDataset::validate() const {
    if (features.rank() != 2)
        throw ContractError("dataset: features must be 2-D, got " + features.shape_str());
    std::size_t m = features.shape[0];
    if (labels.size() != m || split.size() != m)
        throw ContractError("dataset: row count mismatch between features, labels, splits");
    if (num_classes < 2) throw ContractError("dataset: need at least 2 classes");
    // per class x split presence
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes) * 3, 0);
    for (std::size_t i = 0; i < m; ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ContractError("dataset: label " + std::to_string(labels[i]) + " out of range at row " +
                                std::to_string(i));
        counts[static_cast<std::size_t>(labels[i]) * 3 + static_cast<std::size_t>(split[i])]++;
    }
    for (int c = 0; c < num_classes; ++c)
        for (int s = 0; s < 3; ++s)
            if (counts[static_cast<std::size_t>(c) * 3 + static_cast<std::size_t>(s)] == 0)
                throw ContractError("dataset: class " + std::to_string(c) + " missing from split " +
                                    split_name(static_cast<Split>(s)));
}

Batch make_batch(const LabeledDataset& data, const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw ContractError("batch: empty row selection");
    std::size_t n = data.dim();
    Batch b;
    b.x = Tensor({rows.size(), n});
    b.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::size_t r = rows[i];
        if (r >= data.rows()) throw ContractError("batch: row index out of range");
        std::copy_n(&data.features.data[r * n], n, &b.x.data[i * n]);
        b.y[i] = data.labels[r];
    }
    return b;
}

SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "gaussian-blobs") return SyntheticKind::GaussianBlobs;
    if (s == "concentric-rings") return SyntheticKind::ConcentricRings;
    throw ConfigError("unknown dataset kind \"" + s + "\" (expected gaussian-blobs or concentric-rings)");
}

const char* to_string(SyntheticKind k) {
    return k == SyntheticKind::GaussianBlobs ? "gaussian-blobs" : "concentric-rings";
}

namespace {

// Stratified split sizes for one class of c rows: ~60/20/20 with every split
// guaranteed at least one row.
void split_sizes(std::size_t c, std::size_t& n_tr, std::size_t& n_te, std::size_t& n_ho) {
    n_tr = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(c)));
    n_te = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(c)));
    n_tr = std::min(std::max<std::size_t>(n_tr, 1), c - 2);
    n_te = std::min(std::max<std::size_t>(n_te, 1), c - n_tr - 1);
    n_ho = c - n_tr - n_te;
}

}  // namespace

LabeledDataset make_synthetic(SyntheticKind kind, int num_classes, std::size_t dim,
                              std::size_t samples, double separation, std::uint64_t seed) {
    if (num_classes < 2) throw ContractError("make_synthetic: need at least 2 classes");
    if (dim < 1) throw ContractError("make_synthetic: dim must be positive");
    if (samples < 10 * static_cast<std::size_t>(num_classes))
        throw ContractError("make_synthetic: need at least 10 samples per class, got " +
                            std::to_string(samples) + " for " + std::to_string(num_classes) +
                            " classes");
    if (separation < 0.0) throw ContractError("make_synthetic: separation must be >= 0");

    std::size_t K = static_cast<std::size_t>(num_classes);
    LabeledDataset data;
    data.num_classes = num_classes;
    data.features = Tensor({samples, dim});
    data.labels.resize(samples);
    data.split.assign(samples, Split::Train);

    // Round-robin class order mixes labels through the row order; the last
    // samples%K rows take one extra sample of the leading classes.
    std::size_t base = samples / K;
    for (std::size_t i = 0; i < samples; ++i)
        data.labels[i] = static_cast<int>(i < base * K ? i % K : i - base * K);

    // Class means: blobs sit on a circle with adjacent means `separation`
    // apart (chord length); rings use shell radii (k+1)*separation.
    std::vector<std::vector<double>> means(K, std::vector<double>(dim, 0.0));
    if (kind == SyntheticKind::GaussianBlobs) {
        if (dim == 1) {
            for (std::size_t k = 0; k < K; ++k) means[k][0] = static_cast<double>(k) * separation;
        } else {
            double r = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(K)));
            for (std::size_t k = 0; k < K; ++k) {
                double ang = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(K);
                means[k][0] = r * std::cos(ang);
                means[k][1] = r * std::sin(ang);
            }
        }
    }

    Rng rng(seed);
    std::vector<double> dir(dim);
    for (std::size_t i = 0; i < samples; ++i) {
        std::size_t k = static_cast<std::size_t>(data.labels[i]);
        double* row = &data.features.data[i * dim];
        if (kind == SyntheticKind::GaussianBlobs) {
            for (std::size_t j = 0; j < dim; ++j) row[j] = means[k][j] + rng.normal();
        } else {
            double norm = 0.0;
            do {
                norm = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    dir[j] = rng.normal();
                    norm += dir[j] * dir[j];
                }
                norm = std::sqrt(norm);
            } while (norm < 1e-12);
            double radius = static_cast<double>(k + 1) * separation + rng.normal();
            for (std::size_t j = 0; j < dim; ++j) row[j] = dir[j] / norm * radius;
        }
    }

    // Stratified split in generation order (rows are iid within a class).
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < samples; ++i)
            if (static_cast<std::size_t>(data.labels[i]) == k) rows.push_back(i);
        std::size_t n_tr, n_te, n_ho;
        split_sizes(rows.size(), n_tr, n_te, n_ho);
        for (std::size_t i = 0; i < rows.size(); ++i)
            data.split[rows[i]] = i < n_tr ? Split::Train : (i < n_tr + n_te ? Split::Test : Split::Holdout);
    }

    data.validate();
    return data;
}

std::vector<std::size_t> train_subset(const LabeledDataset& data, double fraction) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ContractError("train_subset: fraction must be in (0, 1]");
    std::vector<std::size_t> out;
    for (int c = 0; c < data.num_classes; ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < data.rows(); ++i)
            if (data.split[i] == Split::Train && data.labels[i] == c) rows.push_back(i);
        std::size_t take = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(rows.size())));
        take = std::min(std::max<std::size_t>(take, 1), rows.size());
        out.insert(out.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(out.begin(), out.end());
    return out;
}

void save_dataset(const LabeledDataset& data, const std::string& dir) {
    data.validate();
    detail::ensure_dir(dir);

    nlohmann::json meta;
    meta["classes"] = data.num_classes;
    meta["dim"] = data.dim();
    meta["rows"] = data.rows();
    std::vector<int> tags(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) tags[i] = static_cast<int>(data.split[i]);
    meta["splits"] = tags;
    detail::write_file(dir + "/meta.json", meta.dump(2) + "\n");

    std::string feats;
    std::size_t n = data.dim();
    for (std::size_t i = 0; i < data.rows(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j) feats += ',';
            feats += detail::fmt_double(data.features.data[i * n + j]);
        }
        feats += '\n';
    }
    detail::write_file(dir + "/features.csv", feats);

    std::string labs;
    for (int y : data.labels) labs += std::to_string(y) + "\n";
    detail::write_file(dir + "/labels.csv", labs);
}

namespace {

std::vector<double> parse_csv_row(const std::string& line, std::size_t lineno) {
    std::vector<double> vals;
    const char* p = line.c_str();
    char* end = nullptr;
    while (*p) {
        double v = std::strtod(p, &end);
        if (end == p)
            throw ContractError("features.csv: bad number on line " + std::to_string(lineno));
        vals.push_back(v);
        p = end;
        if (*p == ',') ++p;
    }
    return vals;
}

}  // namespace

LabeledDataset load_dataset(const std::string& dir) {
    nlohmann::json meta = nlohmann::json::parse(detail::read_file(dir + "/meta.json"));
    LabeledDataset data;
    data.num_classes = meta.at("classes").get<int>();
    std::size_t rows = meta.at("rows").get<std::size_t>();
    std::size_t dim = meta.at("dim").get<std::size_t>();
    std::vector<int> tags = meta.at("splits").get<std::vector<int>>();
    if (tags.size() != rows) throw ContractError("meta.json: splits length != rows");
    data.split.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        if (tags[i] < 0 || tags[i] > 2) throw ContractError("meta.json: bad split tag");
        data.split[i] = static_cast<Split>(tags[i]);
    }

    data.features = Tensor({rows, dim});
    {
        std::istringstream in(detail::read_file(dir + "/features.csv"));
        std::string line;
        std::size_t i = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (i >= rows) throw ContractError("features.csv: more rows than meta declares");
            std::vector<double> vals = parse_csv_row(line, i + 1);
            if (vals.size() != dim)
                throw ContractError("features.csv: row " + std::to_string(i + 1) + " has " +
                                    std::to_string(vals.size()) + " fields, expected " +
                                    std::to_string(dim));
            std::copy(vals.begin(), vals.end(), &data.features.data[i * dim]);
            ++i;
        }
        if (i != rows) throw ContractError("features.csv: fewer rows than meta declares");
    }

    {
        std::istringstream in(detail::read_file(dir + "/labels.csv"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            data.labels.push_back(std::stoi(line));
        }
        if (data.labels.size() != rows) throw ContractError("labels.csv: row count mismatch");
    }

    data.validate();
    return data;
}

}  // namespace stackelgrad
