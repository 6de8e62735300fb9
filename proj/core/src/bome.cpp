#include "stackelgrad/bome.hpp"

#include <algorithm>
#include <cmath>

#include "io_util.hpp"
#include "stackelgrad/errors.hpp"
#include "stackelgrad/game_config.hpp"
#include "stackelgrad/optim.hpp"
#include "stackelgrad/payoffs.hpp"

namespace stackelgrad {

void BomeConfig::validate() const {
    if (inner_steps < 1) throw ConfigError("solver.inner_steps must be >= 1");
    if (!(inner_lr > 0.0)) throw ConfigError("solver.inner_lr must be > 0");
    if (!(theta_lr > 0.0)) throw ConfigError("solver.theta_lr must be > 0");
    if (!(w_lr > 0.0)) throw ConfigError("solver.w_lr must be > 0");
    if (!(rho > 0.0)) throw ConfigError("solver.rho must be > 0");
    if (epochs < 0) throw ConfigError("solver.epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("solver.batch_size must be >= 1");
    if (grad_clip_attacker < 0.0) throw ConfigError("solver.grad_clip_attacker must be >= 0");
}

std::string RunReport::csv() const {
    detail::CsvWriter w({"step", "j_c", "j_c_inner", "j_a", "q_hat", "lambda", "grad_ja_norm",
                         "grad_q_norm", "degenerate"});
    for (const BomeStepTrace& t : steps)
        w.append_row({std::to_string(t.step), detail::fmt_double(t.jc_before),
                      detail::fmt_double(t.jc_after), detail::fmt_double(t.ja),
                      detail::fmt_double(t.qhat), detail::fmt_double(t.lambda),
                      detail::fmt_double(t.grad_ja_norm), detail::fmt_double(t.grad_q_norm),
                      t.degenerate ? "1" : "0"});
    return w.str();
}

BilevelProblem::StepEval BilevelProblem::eval_step(const ParamVector& w, const ParamVector& theta,
                                                   const ParamVector& theta_T, const Batch& batch,
                                                   const Batch* attacker_batch) {
    StepEval ev;
    ev.grad_q_theta = theta.zeros_like();
    ev.grad_q_w = w.zeros_like();
    ParamVector gw2 = w.zeros_like();
    ev.h_theta = lower(w, theta, batch, &ev.grad_q_theta, &ev.grad_q_w);
    ev.h_thetaT = lower(w, theta_T, batch, nullptr, &gw2);
    // d qhat / dw = dh(w,theta)/dw - dh(w,theta_T)/dw, theta_T held fixed
    ev.grad_q_w.add_scaled(gw2, -1.0);

    ev.grad_l_theta = theta.zeros_like();
    ev.grad_l_w = w.zeros_like();
    ev.upper_value =
        upper(w, theta, attacker_batch ? *attacker_batch : batch, &ev.grad_l_theta, &ev.grad_l_w);
    return ev;
}

ParamVector inner_approx(BilevelProblem& prob, const ParamVector& w,
                         const ParamVector& theta_start, const Batch& batch,
                         const BomeConfig& cfg) {
    if (cfg.inner_steps < 1) throw ContractError("inner_approx: inner_steps must be >= 1");
    if (!(cfg.inner_lr > 0.0)) throw ContractError("inner_approx: inner_lr must be > 0");

    ParamVector theta = theta_start;
    ParamVector grad = theta.zeros_like();
    Adam adam(cfg.inner_lr);  // fresh state: no history leaks across outer steps
    for (int t = 0; t < cfg.inner_steps; ++t) {
        try {
            prob.lower(w, theta, batch, &grad, nullptr);
        } catch (const NumericError& e) {
            throw SolverError(std::string("inner descent diverged: ") + e.what(), t);
        }
        if (!grad.all_finite())
            throw SolverError("inner descent produced a non-finite gradient", t);
        if (cfg.inner_optimizer == BomeConfig::InnerOpt::Adam)
            adam.step(theta, grad);
        else
            theta.add_scaled(grad, -cfg.inner_lr);
    }
    return theta;
}

double qhat(BilevelProblem& prob, const ParamVector& w, const ParamVector& theta,
            const ParamVector& theta_T, const Batch& batch) {
    double h1 = prob.lower(w, theta, batch, nullptr, nullptr);
    double h2 = prob.lower(w, theta_T, batch, nullptr, nullptr);
    return h1 - h2;
}

LambdaResult lambda_k(const ParamVector& grad_l, const ParamVector& grad_q, double rho) {
    if (!(rho > 0.0)) throw ContractError("lambda_k: rho must be > 0");
    double nq = grad_q.norm2_sq();
    if (nq < 1e-24) return {0.0, true};  // constraint gradient vanished
    double v = rho - grad_l.dot(grad_q) / nq;
    return {v > 0.0 ? v : 0.0, false};
}

BomeStepTrace bome_step(BilevelProblem& prob, BomeState& state, const Batch& batch,
                        const BomeConfig& cfg, const Batch* attacker_batch) {
    ParamVector theta_T;
    try {
        theta_T = inner_approx(prob, state.w, state.theta, batch, cfg);
    } catch (const SolverError& e) {
        throw SolverError(std::string(e.what()) + " (outer step " + std::to_string(state.step) +
                              ")",
                          state.step);
    }

    BilevelProblem::StepEval ev;
    try {
        ev = prob.eval_step(state.w, state.theta, theta_T, batch, attacker_batch);
    } catch (const NumericError& e) {
        throw SolverError(std::string("outer evaluation diverged: ") + e.what(), state.step);
    }

    BomeStepTrace trace;
    trace.step = state.step;
    trace.jc_before = ev.h_theta;
    trace.jc_after = ev.h_thetaT;
    trace.ja = ev.upper_value;
    trace.qhat = ev.h_theta - ev.h_thetaT;

    // The leader steers only through the constraint; a direct dependence of
    // the upper objective on w breaks the update rule below.
    if (ev.grad_l_w.count() != 0 && ev.grad_l_w.linf() != 0.0)
        throw ContractError("bome_step: upper objective has a nonzero w-gradient");

    double ja_norm = ev.grad_l_theta.norm2();
    if (cfg.grad_clip_attacker > 0.0 && ja_norm > cfg.grad_clip_attacker) {
        ev.grad_l_theta.scale(cfg.grad_clip_attacker / ja_norm);
        ja_norm = cfg.grad_clip_attacker;
    }
    trace.grad_ja_norm = ja_norm;

    ParamVector gl = ParamVector::concat(ev.grad_l_theta, ev.grad_l_w);
    ParamVector gq = ParamVector::concat(ev.grad_q_theta, ev.grad_q_w);
    trace.grad_q_norm = gq.norm2();

    LambdaResult lam = lambda_k(gl, gq, cfg.rho);
    trace.lambda = lam.value;
    trace.degenerate = lam.degenerate;

    state.theta.add_scaled(ev.grad_l_theta, -cfg.theta_lr);
    if (lam.value != 0.0) {
        state.theta.add_scaled(ev.grad_q_theta, -cfg.theta_lr * lam.value);
        // the w update carries only the constraint term (the upper objective
        // has no w-gradient); a zero multiplier leaves w bitwise untouched
        state.w.add_scaled(ev.grad_q_w, -cfg.w_lr * lam.value);
    }

    if (!state.theta.all_finite() || !state.w.all_finite())
        throw SolverError("parameters left the finite range after the update", state.step);

    ++state.step;
    return trace;
}

// ---------------------------------------------------------------------------
// The poisoning game as a bilevel problem: the follower minimizes the victim
// training loss on poisoned inputs, the leader minimizes the negated attacker
// loss measured on clean inputs.
// ---------------------------------------------------------------------------
namespace {

class PoisonGameProblem final : public BilevelProblem {
public:
    PoisonGameProblem(const GameConfig& cfg, MlpClassifier clf, PerturbationGenerator gen)
        : cfg_(cfg), clf_(std::move(clf)), gen_(std::move(gen)) {}

    double lower(const ParamVector& w, const ParamVector& theta, const Batch& batch,
                 ParamVector* grad_theta, ParamVector* grad_w) override {
        ad::Graph g;
        std::vector<ad::NodeId> w_nodes;
        ad::NodeId xp;
        if (grad_w) {
            ad::NodeId x0 = g.constant(batch.x);
            w_nodes = leaves(g, w, "w");
            xp = g.add(x0, gen_.build(g, x0, w_nodes));
            if (cfg_.clip_range)
                xp = g.clamp(xp, cfg_.clip_range->first, cfg_.clip_range->second);
        } else {
            // w fixed: poison offline, keep the graph to the victim model
            xp = g.constant(poisoned_features(w, batch.x));
        }
        std::vector<ad::NodeId> t_nodes = leaves(g, theta, "theta");
        ad::NodeId loss =
            build::victim_loss_from_input(g, clf_, t_nodes, xp, batch.y, cfg_.loss_victim);

        if (grad_theta || grad_w) {
            ad::GradientMap gm = g.backward(loss);
            if (grad_theta) collect(gm, t_nodes, *grad_theta, theta);
            if (grad_w) collect(gm, w_nodes, *grad_w, w);
        }
        return g.value(loss).scalar_value();
    }

    double upper(const ParamVector& w, const ParamVector& theta, const Batch& batch,
                 ParamVector* grad_theta, ParamVector* grad_w) override {
        (void)w;
        ad::Graph g;
        std::vector<ad::NodeId> t_nodes = leaves(g, theta, "theta");
        ad::NodeId payoff = build::attacker_payoff_node(g, clf_, t_nodes, batch, cfg_.loss_attacker);
        if (grad_theta) {
            ad::GradientMap gm = g.backward(payoff);
            collect(gm, t_nodes, *grad_theta, theta);
        }
        if (grad_w) grad_w->fill(0.0);  // structural: the clean batch never sees w
        return g.value(payoff).scalar_value();
    }

    // Fused evaluation: one graph shares the generator forward pass between
    // h(w,theta) and h(w,theta_T); theta_T enters behind stop-gradient so the
    // backward pass treats it as a constant. A second backward on the same
    // graph yields the attacker gradients, whose w component is exactly zero
    // by construction (asserted).
    StepEval eval_step(const ParamVector& w, const ParamVector& theta,
                       const ParamVector& theta_T, const Batch& batch,
                       const Batch* attacker_batch) override {
        ad::Graph g;
        ad::NodeId x0 = g.constant(batch.x);
        std::vector<ad::NodeId> w_nodes = leaves(g, w, "w");
        ad::NodeId xp = g.add(x0, gen_.build(g, x0, w_nodes));
        if (cfg_.clip_range) xp = g.clamp(xp, cfg_.clip_range->first, cfg_.clip_range->second);

        std::vector<ad::NodeId> t_nodes = leaves(g, theta, "theta");
        std::vector<ad::NodeId> tT_nodes;
        tT_nodes.reserve(theta_T.count());
        for (std::size_t i = 0; i < theta_T.count(); ++i)
            tT_nodes.push_back(g.stop_grad(g.leaf(theta_T[i], "theta_T." + std::to_string(i))));

        ad::NodeId h1 = build::victim_loss_from_input(g, clf_, t_nodes, xp, batch.y,
                                                      cfg_.loss_victim);
        ad::NodeId h2 = build::victim_loss_from_input(g, clf_, tT_nodes, xp, batch.y,
                                                      cfg_.loss_victim);
        ad::NodeId gap = g.sub(h1, h2);
        ad::NodeId ja = build::attacker_payoff_node(
            g, clf_, t_nodes, attacker_batch ? *attacker_batch : batch, cfg_.loss_attacker);

        StepEval ev;
        ev.h_theta = g.value(h1).scalar_value();
        ev.h_thetaT = g.value(h2).scalar_value();
        ev.upper_value = g.value(ja).scalar_value();

        ad::GradientMap gm_q = g.backward(gap);
        ev.grad_q_theta = theta.zeros_like();
        ev.grad_q_w = w.zeros_like();
        collect(gm_q, t_nodes, ev.grad_q_theta, theta);
        collect(gm_q, w_nodes, ev.grad_q_w, w);

        ad::GradientMap gm_l = g.backward(ja);
        ev.grad_l_theta = theta.zeros_like();
        ev.grad_l_w = w.zeros_like();
        collect(gm_l, t_nodes, ev.grad_l_theta, theta);
        collect(gm_l, w_nodes, ev.grad_l_w, w);
        return ev;
    }

    Tensor poisoned_features(const ParamVector& w, const Tensor& x) const {
        PerturbationGenerator at_w = PerturbationGenerator::from_parts(
            gen_.encoder_dims(), gen_.decoder_dims(), gen_.budget(), gen_.activation(),
            gen_.seed(), w);
        Tensor delta = perturb(at_w, x);
        Tensor out = x;
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            double v = out.data[i] + delta.data[i];
            if (cfg_.clip_range)
                v = std::min(std::max(v, cfg_.clip_range->first), cfg_.clip_range->second);
            out.data[i] = v;
        }
        return out;
    }

private:
    static std::vector<ad::NodeId> leaves(ad::Graph& g, const ParamVector& p,
                                          const std::string& prefix) {
        std::vector<ad::NodeId> ids;
        ids.reserve(p.count());
        for (std::size_t i = 0; i < p.count(); ++i)
            ids.push_back(g.leaf(p[i], prefix + "." + std::to_string(i)));
        return ids;
    }

    static void collect(const ad::GradientMap& gm, const std::vector<ad::NodeId>& nodes,
                        ParamVector& out, const ParamVector& like) {
        if (out.count() != like.count()) out = like.zeros_like();
        for (std::size_t i = 0; i < nodes.size(); ++i) out[i] = gm.at(nodes[i]);
    }

    GameConfig cfg_;
    MlpClassifier clf_;        // architecture template; the live theta is external
    PerturbationGenerator gen_;  // architecture template; the live w is external
};

}  // namespace

PerturbationGenerator train_generator(const GameConfig& cfg, const LabeledDataset& data,
                                      RunReport* report) {
    cfg.validate();
    data.validate();

    std::size_t n = data.dim();
    Rng master(cfg.solver.seed);
    MlpClassifier clf = MlpClassifier::init(cfg.classifier_dims(n, data.num_classes),
                                            cfg.classifier_activation, master.child(0).seed());
    PerturbationGenerator gen =
        PerturbationGenerator::init(cfg.encoder_dims(n), cfg.decoder_dims(n), cfg.budget,
                                    cfg.generator_activation, master.child(1).seed());

    PoisonGameProblem prob(cfg, clf, gen);
    BomeState state{gen.params(), clf.params(), 0};

    std::vector<std::size_t> train_idx = data.indices_of(Split::Train);
    std::size_t bs = std::min(cfg.solver.batch_size, train_idx.size());
    Rng shuffle_rng = master.child(2);
    Rng attacker_rng = master.child(3);

    RunReport local;
    RunReport& rep = report ? *report : local;
    rep.steps.clear();

    for (int epoch = 0; epoch < cfg.solver.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::size_t end = std::min(start + bs, order.size());
            Batch batch = make_batch(
                data, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end)));
            Batch attacker_batch;
            const Batch* abp = nullptr;
            if (cfg.disjoint_attacker_batch) {
                std::vector<std::size_t> rows(end - start);
                for (std::size_t& r : rows)
                    r = train_idx[attacker_rng.integer(train_idx.size())];
                attacker_batch = make_batch(data, rows);
                abp = &attacker_batch;
            }
            rep.steps.push_back(bome_step(prob, state, batch, cfg.solver, abp));
        }
    }

    return PerturbationGenerator::from_parts(gen.encoder_dims(), gen.decoder_dims(), gen.budget(),
                                             gen.activation(), gen.seed(), state.w);
}

std::pair<PerturbationGenerator, RunReport> train_generator(const GameConfig& cfg,
                                                            const LabeledDataset& data) {
    RunReport rep;
    PerturbationGenerator gen = train_generator(cfg, data, &rep);
    return {std::move(gen), std::move(rep)};
}

}  // namespace stackelgrad
