#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stackelgrad/dataset.hpp"
#include "stackelgrad/graph.hpp"
#include "stackelgrad/param_vector.hpp"
#include "stackelgrad/tensor.hpp"

namespace stackelgrad {

enum class Activation { Relu, Tanh };

Activation activation_from_string(const std::string& s);
const char* to_string(Activation a);

// Dense feed-forward stack shared by both players' models. Parameters are
// ordered W0, b0, W1, b1, ... with W stored fan_in x fan_out (batch rows are
// row vectors). Weights and biases init uniform in +-1/sqrt(fan_in).
namespace detail_mlp {
ParamVector init_params(const std::vector<std::size_t>& dims, Rng& rng);
std::size_t param_count(const std::vector<std::size_t>& dims);
}  // namespace detail_mlp

// The victim's function approximator: an MLP from feature space to K logits.
class MlpClassifier {
public:
    MlpClassifier() = default;
    // layer_dims = (input dim, hidden..., K)
    static MlpClassifier init(std::vector<std::size_t> layer_dims, Activation act,
                              std::uint64_t seed);

    const std::vector<std::size_t>& layer_dims() const { return dims_; }
    Activation activation() const { return act_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t input_dim() const { return dims_.front(); }
    std::size_t output_dim() const { return dims_.back(); }

    ParamVector& params() { return params_; }
    const ParamVector& params() const { return params_; }

    // Append this model's forward pass to a graph. `params` supplies one node
    // per parameter tensor (leaves for training, constants for frozen use);
    // returns the logits node (batch x K).
    ad::NodeId build(ad::Graph& g, ad::NodeId x, const std::vector<ad::NodeId>& params) const;

    // Graph nodes for the current parameter values.
    std::vector<ad::NodeId> param_leaves(ad::Graph& g, const std::string& prefix) const;
    std::vector<ad::NodeId> param_constants(ad::Graph& g) const;

    // Restore a model around existing parameter values (checkpoint path).
    static MlpClassifier from_parts(std::vector<std::size_t> dims, Activation act,
                                    std::uint64_t seed, ParamVector params);

private:
    std::vector<std::size_t> dims_;
    Activation act_ = Activation::Tanh;
    std::uint64_t seed_ = 0;
    ParamVector params_;
};

// The attacker's model: an MLP encoder-decoder emitting a sample-wise additive
// perturbation. The final activation is budget * tanh(.), so every output
// coordinate lies in [-budget, budget] by construction.
class PerturbationGenerator {
public:
    PerturbationGenerator() = default;
    // encoder_dims = (n, ..., bottleneck); decoder_dims = (bottleneck, ..., n)
    static PerturbationGenerator init(std::vector<std::size_t> encoder_dims,
                                      std::vector<std::size_t> decoder_dims, double budget,
                                      Activation act, std::uint64_t seed);

    const std::vector<std::size_t>& encoder_dims() const { return enc_; }
    const std::vector<std::size_t>& decoder_dims() const { return dec_; }
    Activation activation() const { return act_; }
    double budget() const { return budget_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t input_dim() const { return enc_.front(); }

    ParamVector& params() { return params_; }
    const ParamVector& params() const { return params_; }

    // Append the generator forward pass; returns the perturbation node
    // (batch x n, bounded by the budget head).
    ad::NodeId build(ad::Graph& g, ad::NodeId x, const std::vector<ad::NodeId>& params) const;

    std::vector<ad::NodeId> param_leaves(ad::Graph& g, const std::string& prefix) const;
    std::vector<ad::NodeId> param_constants(ad::Graph& g) const;

    static PerturbationGenerator from_parts(std::vector<std::size_t> enc,
                                            std::vector<std::size_t> dec, double budget,
                                            Activation act, std::uint64_t seed,
                                            ParamVector params);

private:
    std::vector<std::size_t> enc_;
    std::vector<std::size_t> dec_;
    double budget_ = 0.0;
    Activation act_ = Activation::Tanh;
    std::uint64_t seed_ = 0;
    ParamVector params_;
};

// Forward passes on plain tensors (throwaway graph inside).
Tensor classify(const MlpClassifier& model, const Tensor& x);
Tensor perturb(const PerturbationGenerator& gen, const Tensor& x);

// x' = clip(x + g(x)); labels and splits unchanged; input untouched.
LabeledDataset poison(const PerturbationGenerator& gen, const LabeledDataset& data,
                      std::optional<std::pair<double, double>> clip_range = std::nullopt);

}  // namespace stackelgrad
