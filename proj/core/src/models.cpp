#include "stackelgrad/models.hpp"

#include <cmath>

#include "numeric_util.hpp"
#include "stackelgrad/errors.hpp"

namespace stackelgrad {

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation \"" + s + "\" (expected relu or tanh)");
}

const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

namespace detail_mlp {

ParamVector init_params(const std::vector<std::size_t>& dims, Rng& rng) {
    std::vector<Tensor> ts;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        Tensor w({dims[l], dims[l + 1]});
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        Tensor b({dims[l + 1]});
        for (double& v : b.data) v = rng.uniform(-bound, bound);
        ts.push_back(std::move(w));
        ts.push_back(std::move(b));
    }
    return ParamVector(std::move(ts));
}

std::size_t param_count(const std::vector<std::size_t>& dims) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += (dims[l] + 1) * dims[l + 1];
    return n;
}

}  // namespace detail_mlp

namespace {

void check_dims(const std::vector<std::size_t>& dims, const char* who) {
    if (dims.size() < 2)
        throw ContractError(std::string(who) + ": need at least input and output dims");
    for (std::size_t d : dims)
        if (d == 0) throw ContractError(std::string(who) + ": zero-width layer");
}

// Shared dense-stack builder. `last_linear` leaves the final layer without the
// hidden activation (logits / pre-head output).
ad::NodeId build_stack(ad::Graph& g, ad::NodeId x, const std::vector<ad::NodeId>& params,
                       std::size_t num_layers, Activation act) {
    if (params.size() != 2 * num_layers)
        throw ContractError("model build: expected " + std::to_string(2 * num_layers) +
                            " parameter nodes, got " + std::to_string(params.size()));
    ad::NodeId h = x;
    for (std::size_t l = 0; l < num_layers; ++l) {
        h = g.add_row(g.matmul(h, params[2 * l]), params[2 * l + 1]);
        if (l + 1 < num_layers) h = act == Activation::Relu ? g.relu(h) : g.tanh(h);
    }
    return h;
}

std::vector<ad::NodeId> leaves_for(ad::Graph& g, const ParamVector& p, const std::string& prefix) {
    std::vector<ad::NodeId> ids;
    ids.reserve(p.count());
    for (std::size_t i = 0; i < p.count(); ++i)
        ids.push_back(g.leaf(p[i], prefix + "." + std::to_string(i)));
    return ids;
}

std::vector<ad::NodeId> constants_for(ad::Graph& g, const ParamVector& p) {
    std::vector<ad::NodeId> ids;
    ids.reserve(p.count());
    for (std::size_t i = 0; i < p.count(); ++i) ids.push_back(g.constant(p[i]));
    return ids;
}

}  // namespace

MlpClassifier MlpClassifier::init(std::vector<std::size_t> layer_dims, Activation act,
                                  std::uint64_t seed) {
    check_dims(layer_dims, "classifier");
    MlpClassifier m;
    m.dims_ = std::move(layer_dims);
    m.act_ = act;
    m.seed_ = seed;
    Rng rng(seed);
    m.params_ = detail_mlp::init_params(m.dims_, rng);
    return m;
}

MlpClassifier MlpClassifier::from_parts(std::vector<std::size_t> dims, Activation act,
                                        std::uint64_t seed, ParamVector params) {
    check_dims(dims, "classifier");
    MlpClassifier m;
    m.dims_ = std::move(dims);
    m.act_ = act;
    m.seed_ = seed;
    if (params.size() != detail_mlp::param_count(m.dims_))
        throw ContractError("classifier: parameter count " + std::to_string(params.size()) +
                            " does not match dims");
    m.params_ = std::move(params);
    return m;
}

ad::NodeId MlpClassifier::build(ad::Graph& g, ad::NodeId x,
                                const std::vector<ad::NodeId>& params) const {
    if (g.value(x).rank() != 2 || g.value(x).shape[1] != dims_.front())
        throw ContractError("classifier: input shape " + g.value(x).shape_str() +
                            " does not match input dim " + std::to_string(dims_.front()));
    return build_stack(g, x, params, dims_.size() - 1, act_);
}

std::vector<ad::NodeId> MlpClassifier::param_leaves(ad::Graph& g, const std::string& prefix) const {
    return leaves_for(g, params_, prefix);
}

std::vector<ad::NodeId> MlpClassifier::param_constants(ad::Graph& g) const {
    return constants_for(g, params_);
}

PerturbationGenerator PerturbationGenerator::init(std::vector<std::size_t> encoder_dims,
                                                  std::vector<std::size_t> decoder_dims,
                                                  double budget, Activation act,
                                                  std::uint64_t seed) {
    check_dims(encoder_dims, "generator encoder");
    check_dims(decoder_dims, "generator decoder");
    if (encoder_dims.back() != decoder_dims.front())
        throw ContractError("generator: encoder bottleneck " +
                            std::to_string(encoder_dims.back()) + " != decoder input " +
                            std::to_string(decoder_dims.front()));
    if (encoder_dims.front() != decoder_dims.back())
        throw ContractError("generator: output dim " + std::to_string(decoder_dims.back()) +
                            " != input dim " + std::to_string(encoder_dims.front()));
    if (!(budget > 0.0)) throw ContractError("generator: budget must be > 0");

    PerturbationGenerator gen;
    gen.enc_ = std::move(encoder_dims);
    gen.dec_ = std::move(decoder_dims);
    gen.budget_ = budget;
    gen.act_ = act;
    gen.seed_ = seed;
    std::vector<std::size_t> all = gen.enc_;
    all.insert(all.end(), gen.dec_.begin() + 1, gen.dec_.end());
    Rng rng(seed);
    gen.params_ = detail_mlp::init_params(all, rng);
    return gen;
}

PerturbationGenerator PerturbationGenerator::from_parts(std::vector<std::size_t> enc,
                                                        std::vector<std::size_t> dec,
                                                        double budget, Activation act,
                                                        std::uint64_t seed, ParamVector params) {
    PerturbationGenerator gen = init(enc, dec, budget, act, seed);
    if (params.size() != gen.params_.size())
        throw ContractError("generator: parameter count " + std::to_string(params.size()) +
                            " does not match dims");
    gen.params_ = std::move(params);
    return gen;
}

ad::NodeId PerturbationGenerator::build(ad::Graph& g, ad::NodeId x,
                                        const std::vector<ad::NodeId>& params) const {
    if (g.value(x).rank() != 2 || g.value(x).shape[1] != enc_.front())
        throw ContractError("generator: input shape " + g.value(x).shape_str() +
                            " does not match input dim " + std::to_string(enc_.front()));
    std::size_t layers = (enc_.size() - 1) + (dec_.size() - 1);
    ad::NodeId pre = build_stack(g, x, params, layers, act_);
    // Budget head: every coordinate lands in the open interval (-budget, budget).
    return g.scale(g.tanh(pre), budget_);
}

std::vector<ad::NodeId> PerturbationGenerator::param_leaves(ad::Graph& g,
                                                            const std::string& prefix) const {
    return leaves_for(g, params_, prefix);
}

std::vector<ad::NodeId> PerturbationGenerator::param_constants(ad::Graph& g) const {
    return constants_for(g, params_);
}

Tensor classify(const MlpClassifier& model, const Tensor& x) {
    ad::Graph g;
    ad::NodeId xn = g.constant(x);
    return g.value(model.build(g, xn, model.param_constants(g)));
}

Tensor perturb(const PerturbationGenerator& gen, const Tensor& x) {
    ad::Graph g;
    ad::NodeId xn = g.constant(x);
    return g.value(gen.build(g, xn, gen.param_constants(g)));
}

LabeledDataset poison(const PerturbationGenerator& gen, const LabeledDataset& data,
                      std::optional<std::pair<double, double>> clip_range) {
    if (gen.input_dim() != data.dim())
        throw ContractError("poison: generator input dim " + std::to_string(gen.input_dim()) +
                            " != dataset feature dim " + std::to_string(data.dim()));
    LabeledDataset out = data;
    Tensor delta = perturb(gen, data.features);
    for (std::size_t i = 0; i < out.features.data.size(); ++i) {
        const double x = out.features.data[i];
        double v = detail::snap_into_ball(x + delta.data[i], x, gen.budget());
        if (clip_range)
            v = std::min(std::max(v, clip_range->first), clip_range->second);
        out.features.data[i] = v;
    }
    return out;
}

}  // namespace stackelgrad
