#pragma once

#include <vector>

#include "stackelgrad/graph.hpp"
#include "stackelgrad/models.hpp"
#include "stackelgrad/tensor.hpp"

namespace stackelgrad {

// ---------------------------------------------------------------------------
// Single-sample losses on a K-vector of logits. All are plain evaluations;
// graph-building batch forms live in the build namespace below.
// ---------------------------------------------------------------------------

// Standard cross-entropy -log softmax(logits)[y].
double ce_loss(const Tensor& logits, int y);

// Bounded attacker loss: the negated worst off-label cross-entropy,
// -max_{k!=y} ce(logits, k) = log min_{k!=y} softmax(logits)_k.
// Always <= -log(K-1); the bound is attained when the label probability is 0
// and the off-label mass is uniform.
double surrogate_loss(const Tensor& logits, int y);

// Both sides of the monotone relation ce >= -log(1 - (K-1)*exp(sur)).
// When the log argument is nonpositive (numerically), it is clamped to a tiny
// positive value and `clamped` is set: the relation is vacuous there because
// the left side is +inf.
struct BoundCheck {
    double lhs;  // ce
    double rhs;  // -log(1 - (K-1) e^{sur}), possibly under the clamp
    bool clamped;
};
BoundCheck ce_sur_bound_check(const Tensor& logits, int y);

// Margin loss max_{l!=y} logits[l] - logits[y]; >= 0 iff misclassified under
// the ties-count-as-other convention. Tie among the off-labels: lowest index.
double cw_loss(const Tensor& logits, int y);

// Discrete loss: 0 if cw >= 0 (misclassified, ties included) else -1.
// -mean over a dataset is exactly the classification accuracy.
double acc_loss(const Tensor& logits, int y);

// ---------------------------------------------------------------------------
// Projected gradient ascent inner maximization and the two robust losses.
// ---------------------------------------------------------------------------

struct PgdConfig {
    int steps = 10;
    // <= 0 derives the conventional radius/4.
    double step_size = 0.0;
    double resolve_step(double radius) const { return step_size > 0.0 ? step_size : radius / 4.0; }
};

enum class PgdObjective {
    CrossEntropy,   // maximize mean ce of the true labels
    KlFromAnchor,   // maximize mean KL(f(x_start) || f(x)) with the anchor frozen
};

// Batched PGD: starts at x (no random start), ascends objective by signed
// gradient steps, projects onto the radius ball after every step, and keeps
// each row's best iterate. Every returned row satisfies
// ||x_adv_i - x_i||_inf <= radius exactly.
Tensor pgd_attack(const MlpClassifier& model, const Tensor& x, const std::vector<int>& y,
                  double radius, int steps, double step_size, PgdObjective objective);

// Mean over the batch of max_{||mu||_inf<=radius} ce(x+mu, y). radius 0 is the
// degenerate ball: exactly the mean cross-entropy.
double adv_loss(const MlpClassifier& model, const Tensor& x, const std::vector<int>& y,
                double radius, const PgdConfig& pgd = {});

// Mean over the batch of ce(x, y) + (1/lambda) * max KL(f(x) || f(x+mu)).
double trades_loss(const MlpClassifier& model, const Tensor& x, const std::vector<int>& y,
                   double radius, double lambda, const PgdConfig& pgd = {});

// ---------------------------------------------------------------------------
// Graph builders: batch-mean loss nodes for gradient work. Labels are fixed
// data, never differentiated.
// ---------------------------------------------------------------------------
namespace build {

// Per-row max over the columns of `mat` with column y_i excluded for row i
// (a large negative constant mask keeps the excluded column from winning).
// Ties resolve to the lowest column index.
ad::NodeId rowmax_excluding(ad::Graph& g, ad::NodeId mat, const std::vector<int>& excluded);

// mean_i ce(logits_i, y_i)
ad::NodeId ce_loss_node(ad::Graph& g, ad::NodeId logits, const std::vector<int>& y);

// mean_i surrogate(logits_i, y_i)
ad::NodeId surrogate_loss_node(ad::Graph& g, ad::NodeId logits, const std::vector<int>& y);

// mean_i cw(logits_i, y_i)
ad::NodeId cw_loss_node(ad::Graph& g, ad::NodeId logits, const std::vector<int>& y);

}  // namespace build

}  // namespace stackelgrad
