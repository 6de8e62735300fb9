#include "stackelgrad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "numeric_util.hpp"
#include "stackelgrad/errors.hpp"

namespace stackelgrad {

namespace {

// Column mask that keeps an excluded entry from ever winning a max. Large
// enough to absorb any realistic logit, small enough to stay finite.
constexpr double kMaskValue = -1e30;

void check_label(const Tensor& logits, int y, const char* who) {
    if (logits.rank() != 1)
        throw ContractError(std::string(who) + ": logits must be a 1-D vector, got " +
                            logits.shape_str());
    int k = static_cast<int>(logits.shape[0]);
    if (y < 0 || y >= k)
        throw ContractError(std::string(who) + ": label " + std::to_string(y) +
                            " outside [0, " + std::to_string(k) + ")");
}

std::vector<double> log_softmax_vec(const Tensor& logits) {
    std::size_t k = logits.shape[0];
    double m = logits.data[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits.data[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(logits.data[j] - m);
    double lse = m + std::log(s);
    std::vector<double> lp(k);
    for (std::size_t j = 0; j < k; ++j) lp[j] = logits.data[j] - lse;
    return lp;
}

std::vector<std::uint32_t> to_columns(const std::vector<int>& y, std::size_t k, const char* who) {
    std::vector<std::uint32_t> cols(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= k)
            throw ContractError(std::string(who) + ": label " + std::to_string(y[i]) +
                                " outside [0, " + std::to_string(k) + ") at row " +
                                std::to_string(i));
        cols[i] = static_cast<std::uint32_t>(y[i]);
    }
    return cols;
}

}  // namespace

double ce_loss(const Tensor& logits, int y) {
    check_label(logits, y, "ce_loss");
    return -log_softmax_vec(logits)[static_cast<std::size_t>(y)];
}

double surrogate_loss(const Tensor& logits, int y) {
    check_label(logits, y, "surrogate_loss");
    std::size_t k = logits.shape[0];
    if (k < 2) throw ContractError("surrogate_loss: needs K >= 2 (max over the other labels)");
    std::vector<double> lp = log_softmax_vec(logits);
    double lo = 0.0;
    bool first = true;
    for (std::size_t j = 0; j < k; ++j) {
        if (j == static_cast<std::size_t>(y)) continue;
        if (first || lp[j] < lo) lo = lp[j];
        first = false;
    }
    return lo;
}

BoundCheck ce_sur_bound_check(const Tensor& logits, int y) {
    BoundCheck out{};
    out.lhs = ce_loss(logits, y);
    double k = static_cast<double>(logits.shape[0]);
    // 1 - (K-1) e^{sur}, written as -expm1(sur + log(K-1)) so the subtraction
    // from 1 keeps full precision when the surrogate sits near its cap.
    double arg = -std::expm1(surrogate_loss(logits, y) + std::log(k - 1.0));
    out.clamped = !(arg >= 1e-300);
    out.rhs = -std::log(out.clamped ? 1e-300 : arg);
    return out;
}

double cw_loss(const Tensor& logits, int y) {
    check_label(logits, y, "cw_loss");
    std::size_t k = logits.shape[0];
    if (k < 2) throw ContractError("cw_loss: needs K >= 2");
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j)
        if (j != static_cast<std::size_t>(y) && logits.data[j] > worst) worst = logits.data[j];
    return worst - logits.data[static_cast<std::size_t>(y)];
}

double acc_loss(const Tensor& logits, int y) { return cw_loss(logits, y) >= 0.0 ? 0.0 : -1.0; }

namespace build {

ad::NodeId rowmax_excluding(ad::Graph& g, ad::NodeId mat, const std::vector<int>& excluded) {
    const Tensor& v = g.value(mat);
    if (v.rank() != 2) throw ContractError("rowmax_excluding: input must be 2-D");
    std::size_t rows = v.shape[0], k = v.shape[1];
    if (k < 2) throw ContractError("rowmax_excluding: needs at least 2 columns");
    if (excluded.size() != rows)
        throw ContractError("rowmax_excluding: one excluded column per row required");

    Tensor mask({rows, k});
    for (std::size_t i = 0; i < rows; ++i) {
        if (excluded[i] < 0 || static_cast<std::size_t>(excluded[i]) >= k)
            throw ContractError("rowmax_excluding: excluded column out of range at row " +
                                std::to_string(i));
        mask.data[i * k + static_cast<std::size_t>(excluded[i])] = kMaskValue;
    }
    ad::NodeId masked = g.add(mat, g.constant(std::move(mask)));

    std::vector<std::uint32_t> col(rows, 0);
    ad::NodeId best = g.gather(masked, col);
    for (std::uint32_t j = 1; j < k; ++j) {
        std::fill(col.begin(), col.end(), j);
        // accumulate left-to-right so ties resolve to the lowest column
        best = g.max_elem(best, g.gather(masked, col));
    }
    return best;
}

ad::NodeId ce_loss_node(ad::Graph& g, ad::NodeId logits, const std::vector<int>& y) {
    // Copy the dims up front: adding nodes below may reallocate graph storage.
    const Tensor& v = g.value(logits);
    if (v.rank() != 2) throw ContractError("ce_loss_node: logits must be 2-D");
    const std::size_t rows = v.shape[0], k = v.shape[1];
    if (y.size() != rows) throw ContractError("ce_loss_node: one label per row required");
    ad::NodeId lp = g.log_softmax(logits);
    ad::NodeId picked = g.gather(lp, to_columns(y, k, "ce_loss_node"));
    return g.scale(g.mean(picked), -1.0);
}

ad::NodeId surrogate_loss_node(ad::Graph& g, ad::NodeId logits, const std::vector<int>& y) {
    const Tensor& v = g.value(logits);
    if (v.rank() != 2) throw ContractError("surrogate_loss_node: logits must be 2-D");
    if (y.size() != v.shape[0])
        throw ContractError("surrogate_loss_node: one label per row required");
    // sur = min_{k!=y} log p_k = -( max_{k!=y} -log p_k )
    ad::NodeId lp = g.log_softmax(logits);
    ad::NodeId worst = rowmax_excluding(g, g.scale(lp, -1.0), y);
    return g.mean(g.scale(worst, -1.0));
}

ad::NodeId cw_loss_node(ad::Graph& g, ad::NodeId logits, const std::vector<int>& y) {
    const Tensor& v = g.value(logits);
    if (v.rank() != 2) throw ContractError("cw_loss_node: logits must be 2-D");
    const std::size_t rows = v.shape[0], k = v.shape[1];
    if (y.size() != rows) throw ContractError("cw_loss_node: one label per row required");
    ad::NodeId worst = rowmax_excluding(g, logits, y);
    ad::NodeId correct = g.gather(logits, to_columns(y, k, "cw_loss_node"));
    return g.mean(g.sub(worst, correct));
}

}  // namespace build

namespace {

struct PgdEval {
    std::vector<double> per_row;  // objective value per row
    Tensor grad_x;                // d(mean objective)/dx
};

PgdEval eval_objective(const MlpClassifier& model, const Tensor& x, const std::vector<int>& y,
                       PgdObjective objective, const Tensor* anchor_log_probs) {
    ad::Graph g;
    ad::NodeId xl = g.leaf(x, "pgd.x");
    ad::NodeId logits = model.build(g, xl, model.param_constants(g));
    ad::NodeId lp = g.log_softmax(logits);

    ad::NodeId per_row;
    if (objective == PgdObjective::CrossEntropy) {
        per_row = g.scale(
            g.gather(lp, to_columns(y, g.value(lp).shape[1], "pgd_attack")), -1.0);
    } else {
        per_row = g.kl_rows(g.constant(*anchor_log_probs), lp);
    }

    PgdEval out;
    out.per_row = g.value(per_row).data;
    ad::GradientMap gm = g.backward(g.mean(per_row));
    out.grad_x = gm.at(xl);
    return out;
}

}  // namespace

Tensor pgd_attack(const MlpClassifier& model, const Tensor& x, const std::vector<int>& y,
                  double radius, int steps, double step_size, PgdObjective objective) {
    if (!(radius > 0.0)) throw ContractError("pgd_attack: radius must be > 0");
    if (steps < 1) throw ContractError("pgd_attack: steps must be >= 1");
    if (!(step_size > 0.0)) throw ContractError("pgd_attack: step size must be > 0");
    if (x.rank() != 2) throw ContractError("pgd_attack: x must be 2-D");
    if (objective == PgdObjective::CrossEntropy && y.size() != x.shape[0])
        throw ContractError("pgd_attack: one label per row required");

    Tensor anchor;
    if (objective == PgdObjective::KlFromAnchor) {
        ad::Graph g;
        anchor = g.value(g.log_softmax(model.build(g, g.constant(x), model.param_constants(g))));
    }

    std::size_t rows = x.shape[0], n = x.shape[1];
    Tensor cur = x;
    Tensor best = x;
    std::vector<double> best_obj(rows, -std::numeric_limits<double>::infinity());

    for (int t = 0; t <= steps; ++t) {
        PgdEval ev = eval_objective(model, cur, y, objective,
                                    objective == PgdObjective::KlFromAnchor ? &anchor : nullptr);
        for (std::size_t i = 0; i < rows; ++i)
            if (ev.per_row[i] > best_obj[i]) {  // strict: ties keep the earliest iterate
                best_obj[i] = ev.per_row[i];
                std::copy_n(&cur.data[i * n], n, &best.data[i * n]);
            }
        if (t == steps) break;

        for (std::size_t i = 0; i < cur.data.size(); ++i) {
            double gcomp = ev.grad_x.data[i];
            double sgn = gcomp > 0.0 ? 1.0 : (gcomp < 0.0 ? -1.0 : 0.0);
            double v = cur.data[i] + step_size * sgn;
            // exact projection onto the radius ball around the start point
            v = std::min(v, x.data[i] + radius);
            v = std::max(v, x.data[i] - radius);
            cur.data[i] = detail::snap_into_ball(v, x.data[i], radius);
        }
    }
    return best;
}

namespace {

double mean_ce(const MlpClassifier& model, const Tensor& x, const std::vector<int>& y) {
    Tensor logits = classify(model, x);
    std::size_t rows = logits.shape[0], k = logits.shape[1];
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        Tensor row({k});
        std::copy_n(&logits.data[i * k], k, row.data.begin());
        s += ce_loss(row, y[i]);
    }
    return s / static_cast<double>(rows);
}

}  // namespace

double adv_loss(const MlpClassifier& model, const Tensor& x, const std::vector<int>& y,
                double radius, const PgdConfig& pgd) {
    if (radius < 0.0) throw ContractError("adv_loss: radius must be >= 0");
    if (radius == 0.0) return mean_ce(model, x, y);
    Tensor x_adv = pgd_attack(model, x, y, radius, pgd.steps, pgd.resolve_step(radius),
                              PgdObjective::CrossEntropy);
    return mean_ce(model, x_adv, y);
}

double trades_loss(const MlpClassifier& model, const Tensor& x, const std::vector<int>& y,
                   double radius, double lambda, const PgdConfig& pgd) {
    if (!(lambda > 0.0)) throw ContractError("trades_loss: lambda must be > 0");
    if (radius < 0.0) throw ContractError("trades_loss: radius must be >= 0");
    double ce = mean_ce(model, x, y);
    if (radius == 0.0) return ce;  // KL(p || p) = 0

    Tensor x_adv = pgd_attack(model, x, y, radius, pgd.steps, pgd.resolve_step(radius),
                              PgdObjective::KlFromAnchor);
    ad::Graph g;
    ad::NodeId lp_clean =
        g.log_softmax(model.build(g, g.constant(x), model.param_constants(g)));
    ad::NodeId lp_adv =
        g.log_softmax(model.build(g, g.constant(x_adv), model.param_constants(g)));
    double kl = g.value(g.mean(g.kl_rows(lp_clean, lp_adv))).scalar_value();
    return ce + kl / lambda;
}

}  // namespace stackelgrad
