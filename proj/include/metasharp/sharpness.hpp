#pragma once

#include <cstdint>
#include <vector>

#include "metasharp/objective.hpp"
#include "metasharp/params.hpp"

namespace metasharp {

/// Hyperparameters shared by the sharpness-aware optimizers and the meta
/// loop. alpha_inner/alpha_outer are the ascent radii at the two levels,
/// delta the gradient-descent shift inside the perturbed evaluation point,
/// gamma the outer step size, beta the inner step size (negative means
/// "use gamma"), clip_c the coordinate gradient bound (0 disables).
struct SharpnessConfig {
    double alpha_inner = 0.05;
    double alpha_outer = 0.05;
    double delta = 0.01;
    double gamma = 0.001;
    double beta = -1.0;
    int inner_steps = 1;
    double clip_c = 0.0;

    double inner_rate() const { return beta < 0.0 ? gamma : beta; }
    void validate() const;
};

/// Normalized ascent direction eps = (alpha / ||g||) * g. Zero gradient or
/// alpha = 0 yields the zero vector. ||eps|| == alpha for nonzero g.
GradVector sam_perturbation(const GradVector& g, double alpha);

/// Evaluation point theta + eps - delta * g with eps from sam_perturbation,
/// composed coordinatewise as theta_i + (eps_i - delta * g_i). Properties
/// the sums rely on: delta == alpha/||g|| returns theta exactly; delta == 0
/// returns the plain ascent point theta + eps; zero g returns theta.
ParamVector sagm_probe_point(const ParamVector& theta, const GradVector& g, double alpha, double delta);

/// Same composition with a caller-supplied eps (used at the outer meta level
/// where eps comes from an aggregated gradient).
ParamVector probe_with_eps(const ParamVector& theta, const GradVector& eps, const GradVector& g,
                           double delta);

struct PerturbedEval {
    double loss_p = 0.0;     // loss at the probe point
    GradVector grad_p;       // gradient at the probe point (probe held fixed)
    ParamVector point;
};

/// Loss and gradient at the probe point. First-order convention: the probe
/// point is treated as constant, so the returned gradient is the objective's
/// gradient evaluated there, nothing differentiated through eps or delta*g.
PerturbedEval perturbed_loss(const Objective& obj, const ParamVector& theta, double alpha, double delta);

/// loss(probe) - loss(theta): how much the perturbed objective sits above
/// the current one.
double surrogate_gap(const Objective& obj, const ParamVector& theta, double alpha, double delta);

struct GmEval {
    double total = 0.0;      // loss + loss_p
    double loss = 0.0;
    double loss_p = 0.0;
    GradVector grad;         // at theta
    GradVector grad_p;       // at the probe point
    GradVector direction;    // grad + grad_p, the descent direction
    GradVector eps;
    ParamVector probe;
};

/// Gradient-matching objective: loss(theta) + loss(theta + eps - delta*g),
/// with gradient grad + grad_p under the first-order convention. With
/// delta = 0 this is exactly the ERM term plus the SAM perturbed loss,
/// composed identically.
GmEval gm_loss(const Objective& obj, const ParamVector& theta, double alpha, double delta);

/// cos angle between two gradients; 0 if either is zero. Clamped to [-1, 1].
double alignment_cosine(const GradVector& a, const GradVector& b);

void sgd_step(ParamVector& theta, const GradVector& grad, double rate);

/// Adam moment state. Conventional defaults; recorded in run manifests.
struct AdamState {
    std::uint64_t t = 0;
    std::vector<double> m, v;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(ParamVector& theta, const GradVector& grad, double rate, AdamState& state);

/// Optimizer iteration state carried across meta steps.
struct OptState {
    std::uint64_t t = 0;
    AdamState adam;
};

/// Diagnostics of one single-level step.
struct SagmStepInfo {
    double loss = 0.0;
    double loss_p = 0.0;
    double gap = 0.0;
    double align = 0.0;
    double grad_norm = 0.0;
    double pgrad_norm = 0.0;
};

/// One single-level sharpness-aware gradient-matching descent step:
/// theta' = theta - gamma * (grad + grad_p). Applies the configured clip
/// bound to every gradient the step consumes.
ParamVector sagm_step(const Objective& obj, const ParamVector& theta, const SharpnessConfig& cfg,
                      SagmStepInfo* info = nullptr);

} // namespace metasharp
