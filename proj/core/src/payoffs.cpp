#include "stackelgrad/payoffs.hpp"

#include <algorithm>
#include <cmath>

#include "stackelgrad/errors.hpp"

namespace stackelgrad {

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "ce") return LossKind::CE;
    if (s == "sur") return LossKind::SUR;
    if (s == "adv") return LossKind::ADV;
    if (s == "trades") return LossKind::TRADES;
    if (s == "cw") return LossKind::CW;
    if (s == "acc") return LossKind::ACC;
    throw ConfigError("unknown loss kind \"" + s + "\" (expected ce, sur, adv, trades, cw, acc)");
}

const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::CE: return "ce";
        case LossKind::SUR: return "sur";
        case LossKind::ADV: return "adv";
        case LossKind::TRADES: return "trades";
        case LossKind::CW: return "cw";
        case LossKind::ACC: return "acc";
    }
    return "?";
}

void LossSpec::validate(bool strict_radius) const {
    bool robust = kind == LossKind::ADV || kind == LossKind::TRADES;
    if (robust) {
        if (adv_radius < 0.0) throw ConfigError("adv_radius must be >= 0");
        if (strict_radius && !(adv_radius > 0.0))
            throw ConfigError(std::string(to_string(kind)) + " loss requires adv_radius > 0");
        if (pgd.steps < 1) throw ConfigError("pgd steps must be >= 1");
    }
    if (kind == LossKind::TRADES && !(trades_lambda > 0.0))
        throw ConfigError("trades_lambda must be > 0");
}

namespace {

void check_ctx(const PayoffContext& ctx, const char* who) {
    if (!ctx.data || !ctx.model) throw ContractError(std::string(who) + ": context incomplete");
    if (ctx.data->indices_of(ctx.split).empty())
        throw ContractError(std::string(who) + ": split " + split_name(ctx.split) + " is empty");
}

Tensor row_of(const Tensor& mat, std::size_t i) {
    std::size_t k = mat.shape[1];
    Tensor row({k});
    std::copy_n(&mat.data[i * k], k, row.data.begin());
    return row;
}

}  // namespace

double payoff_victim(const PayoffContext& ctx, const LossSpec& loss_c) {
    check_ctx(ctx, "payoff_victim");
    loss_c.validate(false);
    if (loss_c.kind != LossKind::CE && loss_c.kind != LossKind::ADV &&
        loss_c.kind != LossKind::TRADES)
        throw ContractError(std::string("payoff_victim: unsupported victim loss ") +
                            to_string(loss_c.kind));

    Batch b = make_batch(*ctx.data, ctx.data->indices_of(ctx.split));
    Tensor x = b.x;
    if (ctx.generator) {
        Tensor delta = perturb(*ctx.generator, x);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            double v = x.data[i] + delta.data[i];
            if (ctx.clip_range)
                v = std::min(std::max(v, ctx.clip_range->first), ctx.clip_range->second);
            x.data[i] = v;
        }
    }

    switch (loss_c.kind) {
        case LossKind::ADV:
            return adv_loss(*ctx.model, x, b.y, loss_c.adv_radius, loss_c.pgd);
        case LossKind::TRADES:
            return trades_loss(*ctx.model, x, b.y, loss_c.adv_radius, loss_c.trades_lambda,
                               loss_c.pgd);
        default: {
            Tensor logits = classify(*ctx.model, x);
            double s = 0.0;
            for (std::size_t i = 0; i < b.size(); ++i) s += ce_loss(row_of(logits, i), b.y[i]);
            return s / static_cast<double>(b.size());
        }
    }
}

double payoff_attacker(const PayoffContext& ctx, const LossSpec& loss_a) {
    check_ctx(ctx, "payoff_attacker");
    if (loss_a.kind != LossKind::SUR && loss_a.kind != LossKind::CE &&
        loss_a.kind != LossKind::CW && loss_a.kind != LossKind::ACC)
        throw ContractError(std::string("payoff_attacker: unsupported attacker loss ") +
                            to_string(loss_a.kind));

    // Clean split on purpose: the attacker's objective measures what the
    // victim learned, not the poisoned inputs themselves.
    Batch b = make_batch(*ctx.data, ctx.data->indices_of(ctx.split));
    Tensor logits = classify(*ctx.model, b.x);
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        Tensor row = row_of(logits, i);
        switch (loss_a.kind) {
            case LossKind::SUR: s += surrogate_loss(row, b.y[i]); break;
            case LossKind::CE: s += ce_loss(row, b.y[i]); break;
            case LossKind::CW: s += cw_loss(row, b.y[i]); break;
            default: s += acc_loss(row, b.y[i]); break;
        }
    }
    return -s / static_cast<double>(b.size());
}

namespace build {

ad::NodeId victim_loss_from_input(ad::Graph& g, const MlpClassifier& model,
                                  const std::vector<ad::NodeId>& model_params, ad::NodeId x_input,
                                  const std::vector<int>& y, const LossSpec& loss_c) {
    if (y.empty()) throw ContractError("victim_loss_from_input: empty batch");
    loss_c.validate(false);
    if (loss_c.kind != LossKind::CE && loss_c.kind != LossKind::ADV &&
        loss_c.kind != LossKind::TRADES)
        throw ContractError(std::string("victim_loss_from_input: unsupported victim loss ") +
                            to_string(loss_c.kind));

    bool robust = (loss_c.kind == LossKind::ADV || loss_c.kind == LossKind::TRADES) &&
                  loss_c.adv_radius > 0.0;
    if (!robust) {
        // CE, or a robust kind at radius 0 (degenerate ball: same value and
        // gradient as CE).
        return ce_loss_node(g, model.build(g, x_input, model_params), y);
    }

    // Inner maximization at the values currently in the graph; the argmax
    // enters as a constant offset so the outer gradient treats it as fixed.
    ParamVector theta = model.params().zeros_like();
    for (std::size_t i = 0; i < model_params.size(); ++i) theta[i] = g.value(model_params[i]);
    MlpClassifier at_theta = MlpClassifier::from_parts(model.layer_dims(), model.activation(),
                                                       model.seed(), std::move(theta));
    // Copy, not reference: node additions below reallocate graph storage.
    const Tensor x_val = g.value(x_input);
    Tensor x_adv = pgd_attack(at_theta, x_val, y, loss_c.adv_radius, loss_c.pgd.steps,
                              loss_c.pgd.resolve_step(loss_c.adv_radius),
                              loss_c.kind == LossKind::ADV ? PgdObjective::CrossEntropy
                                                           : PgdObjective::KlFromAnchor);
    Tensor mu = x_adv;
    for (std::size_t i = 0; i < mu.data.size(); ++i) mu.data[i] -= x_val.data[i];
    ad::NodeId x_eval = g.add(x_input, g.constant(std::move(mu)));

    if (loss_c.kind == LossKind::ADV)
        return ce_loss_node(g, model.build(g, x_eval, model_params), y);

    ad::NodeId lp_clean = g.log_softmax(model.build(g, x_input, model_params));
    ad::NodeId lp_adv = g.log_softmax(model.build(g, x_eval, model_params));
    std::vector<std::uint32_t> cols(y.size());
    for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = static_cast<std::uint32_t>(y[i]);
    ad::NodeId ce = g.scale(g.mean(g.gather(lp_clean, cols)), -1.0);
    ad::NodeId kl = g.mean(g.kl_rows(lp_clean, lp_adv));
    return g.add(ce, g.scale(kl, 1.0 / loss_c.trades_lambda));
}

VictimLossBuild victim_loss_node(ad::Graph& g, const MlpClassifier& model,
                                 const std::vector<ad::NodeId>& model_params,
                                 const PerturbationGenerator* gen,
                                 const std::vector<ad::NodeId>* gen_params, const Batch& batch,
                                 const LossSpec& loss_c,
                                 std::optional<std::pair<double, double>> clip_range) {
    if (batch.size() == 0) throw ContractError("victim_loss_node: empty batch");

    VictimLossBuild out{};
    ad::NodeId x0 = g.constant(batch.x);
    ad::NodeId xp = x0;
    if (gen) {
        if (!gen_params) throw ContractError("victim_loss_node: generator without its params");
        xp = g.add(x0, gen->build(g, x0, *gen_params));
        if (clip_range) xp = g.clamp(xp, clip_range->first, clip_range->second);
    }
    out.poisoned = xp;
    out.loss = victim_loss_from_input(g, model, model_params, xp, batch.y, loss_c);
    return out;
}

ad::NodeId attacker_payoff_node(ad::Graph& g, const MlpClassifier& model,
                                const std::vector<ad::NodeId>& model_params, const Batch& batch,
                                const LossSpec& loss_a) {
    if (batch.size() == 0) throw ContractError("attacker_payoff_node: empty batch");
    ad::NodeId logits = model.build(g, g.constant(batch.x), model_params);
    ad::NodeId loss;
    switch (loss_a.kind) {
        case LossKind::SUR: loss = surrogate_loss_node(g, logits, batch.y); break;
        case LossKind::CE: loss = ce_loss_node(g, logits, batch.y); break;
        case LossKind::CW: loss = cw_loss_node(g, logits, batch.y); break;
        default:
            throw ContractError(std::string("attacker_payoff_node: no gradient for ") +
                                to_string(loss_a.kind));
    }
    return g.scale(loss, -1.0);
}

}  // namespace build

}  // namespace stackelgrad
