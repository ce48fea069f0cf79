#include "metasharp/sharpness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metasharp {

void SharpnessConfig::validate() const {
    if (alpha_inner < 0.0 || alpha_outer < 0.0)
        throw std::invalid_argument("SharpnessConfig: perturbation radii must be >= 0");
    if (delta < 0.0) throw std::invalid_argument("SharpnessConfig: delta must be >= 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("SharpnessConfig: gamma must be > 0");
    if (beta >= 0.0 && beta == 0.0) throw std::invalid_argument("SharpnessConfig: beta must be > 0 when set");
    if (inner_steps < 0) throw std::invalid_argument("SharpnessConfig: inner_steps must be >= 0");
    if (clip_c < 0.0) throw std::invalid_argument("SharpnessConfig: clip_c must be >= 0");
}

GradVector sam_perturbation(const GradVector& g, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("sam_perturbation: alpha must be >= 0");
    GradVector eps(g.size());
    const double n = l2_norm(g);
    if (n == 0.0 || alpha == 0.0) return eps;
    const double coeff = alpha / n;
    for (std::size_t i = 0; i < g.size(); ++i) eps[i] = coeff * g[i];
    return eps;
}

ParamVector probe_with_eps(const ParamVector& theta, const GradVector& eps, const GradVector& g,
                           double delta) {
    if (eps.size() != theta.size() || g.size() != theta.size())
        throw std::invalid_argument("probe_with_eps: length mismatch");
    ParamVector p = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) p[i] = theta[i] + (eps[i] - delta * g[i]);
    return p;
}

ParamVector sagm_probe_point(const ParamVector& theta, const GradVector& g, double alpha, double delta) {
    if (g.size() != theta.size())
        throw std::invalid_argument("sagm_probe_point: gradient length " + std::to_string(g.size()) +
                                    " != parameter length " + std::to_string(theta.size()));
    if (l2_norm(g) == 0.0) return theta;
    return probe_with_eps(theta, sam_perturbation(g, alpha), g, delta);
}

PerturbedEval perturbed_loss(const Objective& obj, const ParamVector& theta, double alpha, double delta) {
    const LossGrad base = obj.eval(theta);
    PerturbedEval out;
    out.point = sagm_probe_point(theta, base.grad, alpha, delta);
    const LossGrad at_probe = obj.eval(out.point);
    out.loss_p = at_probe.loss;
    out.grad_p = at_probe.grad;
    return out;
}

double surrogate_gap(const Objective& obj, const ParamVector& theta, double alpha, double delta) {
    const LossGrad base = obj.eval(theta);
    const ParamVector probe = sagm_probe_point(theta, base.grad, alpha, delta);
    return obj.value(probe) - base.loss;
}

GmEval gm_loss(const Objective& obj, const ParamVector& theta, double alpha, double delta) {
    GmEval out;
    const LossGrad base = obj.eval(theta);
    out.loss = base.loss;
    out.grad = base.grad;
    out.eps = sam_perturbation(base.grad, alpha);
    out.probe = probe_with_eps(theta, out.eps, base.grad, delta);
    const LossGrad at_probe = obj.eval(out.probe);
    out.loss_p = at_probe.loss;
    out.grad_p = at_probe.grad;
    out.total = out.loss + out.loss_p;
    out.direction = GradVector(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) out.direction[i] = out.grad[i] + out.grad_p[i];
    return out;
}

double alignment_cosine(const GradVector& a, const GradVector& b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

void sgd_step(ParamVector& theta, const GradVector& grad, double rate) {
    if (grad.size() != theta.size()) throw std::invalid_argument("sgd_step: length mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= rate * grad[i];
}

void adam_step(ParamVector& theta, const GradVector& grad, double rate, AdamState& state) {
    if (grad.size() != theta.size()) throw std::invalid_argument("adam_step: length mismatch");
    if (state.m.empty()) {
        state.m.assign(theta.size(), 0.0);
        state.v.assign(theta.size(), 0.0);
    }
    if (state.m.size() != theta.size()) throw std::invalid_argument("adam_step: state length mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        theta[i] -= rate * mhat / (std::sqrt(vhat) + state.eps);
    }
}

ParamVector sagm_step(const Objective& obj, const ParamVector& theta, const SharpnessConfig& cfg,
                      SagmStepInfo* info) {
    cfg.validate();
    std::shared_ptr<const Objective> view(&obj, [](const Objective*) {});
    view = maybe_clipped(view, cfg.clip_c);
    const GmEval gm = gm_loss(*view, theta, cfg.alpha_outer, cfg.delta);
    if (info) {
        info->loss = gm.loss;
        info->loss_p = gm.loss_p;
        info->gap = gm.loss_p - gm.loss;
        info->align = alignment_cosine(gm.grad, gm.grad_p);
        info->grad_norm = l2_norm(gm.grad);
        info->pgrad_norm = l2_norm(gm.grad_p);
    }
    ParamVector next = theta;
    sgd_step(next, gm.direction, cfg.gamma);
    return next;
}

} // namespace metasharp
