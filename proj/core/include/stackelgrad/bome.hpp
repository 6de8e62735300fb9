#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stackelgrad/dataset.hpp"
#include "stackelgrad/param_vector.hpp"

namespace stackelgrad {

struct GameConfig;  // game_config.hpp
class PerturbationGenerator;

// Solver hyperparameters. The outer update uses separate step sizes for the
// two players (theta_lr for the victim, w_lr for the generator); the inner
// T-step approximation has its own optimizer and step size.
struct BomeConfig {
    int inner_steps = 10;     // T
    double inner_lr = 1e-3;   // alpha
    double theta_lr = 0.01;   // beta (victim)
    double w_lr = 0.1;        // beta (generator)
    double rho = 1.5;         // barrier coefficient

    enum class InnerOpt { Adam, Gd };
    InnerOpt inner_optimizer = InnerOpt::Adam;

    int epochs = 1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    // > 0 caps ||grad_theta of the attacker payoff||_2 at this value before it
    // enters the update and the multiplier (the diagnostic clip variant).
    double grad_clip_attacker = 0.0;

    void validate() const;
};

// One outer step's diagnostics. qhat is recorded even when negative.
struct BomeStepTrace {
    long step = 0;
    double jc_before = 0.0;      // lower objective at (w, theta)
    double jc_after = 0.0;       // lower objective at (w, theta_T)
    double ja = 0.0;             // upper objective at (w, theta)
    double qhat = 0.0;           // jc_before - jc_after
    double lambda = 0.0;         // barrier multiplier
    double grad_ja_norm = 0.0;   // ||grad_theta upper||_2 (after any clip)
    double grad_q_norm = 0.0;    // joint ||grad qhat||_2 over (theta, w)
    bool degenerate = false;     // constraint gradient vanished; lambda forced 0
};

// Full per-step trace of one training run.
struct RunReport {
    std::vector<BomeStepTrace> steps;

    // One row per outer step: step, j_c, j_c_inner, j_a, q_hat, lambda,
    // grad_ja_norm, grad_q_norm, degenerate.
    std::string csv() const;
};

// A bilevel instance: upper objective l(w, theta) subject to theta minimizing
// the lower objective h(w, theta). Implementations supply values and exact
// gradients; the solver owns the update rule.
class BilevelProblem {
public:
    virtual ~BilevelProblem() = default;

    // Lower (follower) objective on one batch. Gradient outputs are optional;
    // pass nullptr to skip. Output ParamVectors are overwritten.
    virtual double lower(const ParamVector& w, const ParamVector& theta, const Batch& batch,
                         ParamVector* grad_theta, ParamVector* grad_w) = 0;

    // Upper (leader) objective. The solver requires grad_w of the upper
    // objective to be identically zero (the leader steers only through the
    // constraint); implementations either return exact zeros or leave the
    // output untouched when it is structurally zero.
    virtual double upper(const ParamVector& w, const ParamVector& theta, const Batch& batch,
                         ParamVector* grad_theta, ParamVector* grad_w) = 0;

    // Everything one outer step needs at (w, theta, theta_T). The default
    // composes lower/upper calls; implementations may fuse the evaluations.
    struct StepEval {
        double h_theta = 0.0;   // h(w, theta)
        double h_thetaT = 0.0;  // h(w, theta_T)
        double upper_value = 0.0;
        ParamVector grad_q_theta, grad_q_w;  // gradient of h(w,theta) - h(w,theta_T const)
        ParamVector grad_l_theta, grad_l_w;
    };
    virtual StepEval eval_step(const ParamVector& w, const ParamVector& theta,
                               const ParamVector& theta_T, const Batch& batch,
                               const Batch* attacker_batch);
};

// T optimizer steps on the lower objective in theta, w held fixed; returns the
// reached point. A fresh optimizer state is used per call (restarts from the
// warm-started theta each time). Non-finite loss raises SolverError carrying
// the inner step index.
ParamVector inner_approx(BilevelProblem& prob, const ParamVector& w,
                         const ParamVector& theta_start, const Batch& batch,
                         const BomeConfig& cfg);

// Value-gap estimate h(w,theta) - h(w,theta_T); theta_T is treated as a point,
// not a function of w.
double qhat(BilevelProblem& prob, const ParamVector& w, const ParamVector& theta,
            const ParamVector& theta_T, const Batch& batch);

// Barrier multiplier max((rho*||gq||^2 - <gl, gq>) / ||gq||^2, 0) over joint
// (theta, w) gradients. A vanishing constraint gradient (||gq||^2 < 1e-24) is
// degenerate: multiplier 0, flag set.
struct LambdaResult {
    double value = 0.0;
    bool degenerate = false;
};
LambdaResult lambda_k(const ParamVector& grad_l, const ParamVector& grad_q, double rho);

// Joint state of the two players.
struct BomeState {
    ParamVector w;
    ParamVector theta;
    long step = 0;
};

// One simultaneous update of both players:
//   theta <- theta - theta_lr * (grad_l_theta + lambda * grad_q_theta)
//   w     <- w     - w_lr     * (lambda * grad_q_w)
// The w direction carries no upper-objective term: grad_w of the upper
// objective is asserted to be exactly zero.
BomeStepTrace bome_step(BilevelProblem& prob, BomeState& state, const Batch& batch,
                        const BomeConfig& cfg, const Batch* attacker_batch = nullptr);

// Full training loop of the poisoning game: warm-started victim, per-epoch
// reshuffled mini-batches, one bome_step per batch. Deterministic given the
// config seed. On divergence the report holds the completed prefix and a
// SolverError carrying the outer step index is thrown.
PerturbationGenerator train_generator(const GameConfig& cfg, const LabeledDataset& data,
                                      RunReport* report);
std::pair<PerturbationGenerator, RunReport> train_generator(const GameConfig& cfg,
                                                            const LabeledDataset& data);

}  // namespace stackelgrad
