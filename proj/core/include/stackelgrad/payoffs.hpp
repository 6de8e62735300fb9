#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stackelgrad/dataset.hpp"
#include "stackelgrad/losses.hpp"
#include "stackelgrad/models.hpp"

namespace stackelgrad {

enum class LossKind { CE, SUR, ADV, TRADES, CW, ACC };

LossKind loss_kind_from_string(const std::string& s);
const char* to_string(LossKind k);

// A loss selection with its per-kind parameters. adv_radius applies to
// ADV/TRADES (0 is the degenerate ball: both collapse to CE); trades_lambda
// weighs the robustness term.
struct LossSpec {
    LossKind kind = LossKind::CE;
    double adv_radius = 0.0;
    double trades_lambda = 1.0;
    PgdConfig pgd;

    // strict requires a positive radius for the robust kinds (solver-side
    // contract); evaluation-side callers pass strict=false and may use 0.
    void validate(bool strict_radius) const;
};

// Where and with whom a payoff is evaluated. A null generator means clean
// evaluation (the victim sees the split unmodified).
struct PayoffContext {
    const LabeledDataset* data = nullptr;
    Split split = Split::Train;
    const MlpClassifier* model = nullptr;
    const PerturbationGenerator* generator = nullptr;
    std::optional<std::pair<double, double>> clip_range;
};

// Victim payoff: mean training loss over the (poisoned) split. Accepts
// CE, ADV, TRADES.
double payoff_victim(const PayoffContext& ctx, const LossSpec& loss_c);

// Attacker payoff: the negated mean attacker loss over the CLEAN split
// (the generator never enters; its gradient is identically zero). Accepts
// SUR, CE, CW, ACC. For SUR the loss bound sur <= -log(K-1) negates into
// payoff >= log(K-1), which is what gives the minimization a floor.
double payoff_attacker(const PayoffContext& ctx, const LossSpec& loss_a);

namespace build {

// In-graph victim loss (batch mean) on an existing input node. For the robust
// kinds the inner maximization runs at the parameter and input values
// currently stored in the graph nodes and enters as a constant offset (the
// standard first-order treatment of the inner argmax).
ad::NodeId victim_loss_from_input(ad::Graph& g, const MlpClassifier& model,
                                  const std::vector<ad::NodeId>& model_params, ad::NodeId x_input,
                                  const std::vector<int>& y, const LossSpec& loss_c);

// In-graph victim loss over one batch. The poisoned input x' = clip(x + g_w(x))
// is built from `gen_params` when a generator is given.
struct VictimLossBuild {
    ad::NodeId loss;      // scalar node
    ad::NodeId poisoned;  // x' node (the clean constant when no generator)
};
VictimLossBuild victim_loss_node(ad::Graph& g, const MlpClassifier& model,
                                 const std::vector<ad::NodeId>& model_params,
                                 const PerturbationGenerator* gen,
                                 const std::vector<ad::NodeId>* gen_params, const Batch& batch,
                                 const LossSpec& loss_c,
                                 std::optional<std::pair<double, double>> clip_range);

// In-graph attacker loss (negated mean loss on the clean batch). SUR, CE and
// CW only: the discrete ACC loss has no useful gradient.
ad::NodeId attacker_payoff_node(ad::Graph& g, const MlpClassifier& model,
                                const std::vector<ad::NodeId>& model_params, const Batch& batch,
                                const LossSpec& loss_a);

}  // namespace build

}  // namespace stackelgrad
