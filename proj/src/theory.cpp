#include "metasharp/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace metasharp {

namespace {

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

}  // namespace

void BoundInputs::validate() const {
    if (!finite_nonneg(C) || !finite_nonneg(L_lip) || !finite_nonneg(alpha) ||
        !finite_nonneg(delta) || !finite_nonneg(gamma) || !finite_nonneg(L0) ||
        !finite_nonneg(L_star) || !finite_nonneg(sigma1_sq) || !finite_nonneg(sigma2_sq))
        throw std::invalid_argument("BoundInputs: all fields must be finite and nonnegative");
    if (T < 1) throw std::invalid_argument("BoundInputs: T must be >= 1");
    if (d < 1) throw std::invalid_argument("BoundInputs: d must be >= 1");
}

double k_constant(double C, std::size_t d, double alpha, double delta) {
    if (!(C > 0.0)) throw std::invalid_argument("k_constant: C must be > 0");
    if (d < 1) throw std::invalid_argument("k_constant: d must be >= 1");
    const double cd = C * std::sqrt(static_cast<double>(d));
    return cd + alpha - delta * cd;
}

double convergence_bound_rhs(const BoundInputs& b) {
    b.validate();
    const double T = static_cast<double>(b.T);
    const double cd = b.C * std::sqrt(static_cast<double>(b.d));
    const double c2d = b.C * b.C * static_cast<double>(b.d);
    const double k = k_constant(b.C, b.d, b.alpha, b.delta);
    const double g = b.gamma, L = b.L_lip;
    const double terms = g * cd * k + (g * g * L + g) * c2d + g * g * L * k * k -
                         (g * g * L / 2.0) * (k * k + c2d - 2.0 * k * cd);
    return (b.L0 - b.L_star) / T + terms / T;
}

double stochastic_convergence_bound_rhs(const BoundInputs& b) {
    b.validate();
    const double T = static_cast<double>(b.T);
    const double c2d = b.C * b.C * static_cast<double>(b.d);
    const double k = k_constant(b.C, b.d, b.alpha, b.delta);
    const double A = c2d + b.sigma1_sq;
    const double B = k * k + b.sigma2_sq;
    const double root = std::sqrt(A * B);
    const double g = b.gamma, L = b.L_lip;
    const double terms = g * (A + root) + L * g * g * (A + B + 2.0 * root);
    return (b.L0 - b.L_star) / T + terms / T;
}

double surrogate_grad_norm_sq(double grad_norm_sq, double perturbed_grad_norm, double align_cos) {
    if (!(grad_norm_sq >= 0.0) || !(perturbed_grad_norm >= 0.0))
        throw std::invalid_argument("surrogate_grad_norm_sq: norms must be nonnegative");
    // ||a - b||^2 with a = perturbed gradient, b = gradient, from the norms and
    // the cosine of the angle between them.
    return perturbed_grad_norm * perturbed_grad_norm + grad_norm_sq -
           2.0 * align_cos * perturbed_grad_norm * std::sqrt(grad_norm_sq);
}

StepBoundReport step_bound_report(const RunTrace& trace, double C, std::size_t d, double alpha,
                                  double delta, double sigma1_sq, double sigma2_sq) {
    if (trace.steps.empty()) throw std::invalid_argument("step_bound_report: empty trace");
    if (sigma1_sq < 0.0 || sigma2_sq < 0.0)
        throw std::invalid_argument("step_bound_report: variances must be >= 0");

    StepBoundReport rep;
    rep.k = k_constant(C, d, alpha, delta);
    const double cd = C * std::sqrt(static_cast<double>(d));
    const double c2d = C * C * static_cast<double>(d);
    const double k = rep.k;

    rep.perturbed_grad.name = "perturbed_grad_norm";
    rep.perturbed_grad.rhs = k;
    rep.surrogate_grad_sq.name = "surrogate_grad_norm_sq";
    rep.surrogate_grad_sq.rhs = k * k - 2.0 * k * cd + c2d;
    rep.noisy_surrogate_grad_sq.name = "noisy_surrogate_grad_norm_sq";
    const double A = c2d + sigma1_sq;
    const double B = k * k + sigma2_sq;
    rep.noisy_surrogate_grad_sq.rhs = A + B - 2.0 * std::sqrt(A * B);

    auto scan = [&trace](BoundCheck& chk, auto&& lhs_of) {
        chk.min_margin = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < trace.steps.size(); ++t) {
            const double lhs = lhs_of(trace.steps[t]);
            if (!std::isfinite(lhs))
                throw std::invalid_argument("step_bound_report: non-finite trace entry at step " +
                                            std::to_string(t));
            const double margin = chk.rhs - lhs;
            if (margin < chk.min_margin) {
                chk.min_margin = margin;
                chk.worst_lhs = lhs;
                chk.worst_step = t;
            }
        }
    };

    scan(rep.perturbed_grad, [](const MetaStepReport& s) { return s.perturbed_grad_norm; });
    scan(rep.surrogate_grad_sq, [](const MetaStepReport& s) {
        return surrogate_grad_norm_sq(s.grad_norm_sq, s.perturbed_grad_norm, s.align_cos);
    });
    scan(rep.noisy_surrogate_grad_sq, [](const MetaStepReport& s) {
        return surrogate_grad_norm_sq(s.grad_norm_sq, s.perturbed_grad_norm, s.align_cos);
    });
    return rep;
}

ConstantEstimates estimate_constants(const std::vector<std::shared_ptr<const Objective>>& objectives,
                                     const std::vector<ParamVector>& samples) {
    if (objectives.empty()) throw std::invalid_argument("estimate_constants: no objectives");
    for (const auto& o : objectives)
        if (!o) throw std::invalid_argument("estimate_constants: null objective");
    if (samples.size() < 2)
        throw std::invalid_argument("estimate_constants: need at least 2 parameter samples");

    ConstantEstimates est;
    bool any_pair = false;
    std::vector<GradVector> grads(samples.size());
    for (const auto& obj : objectives) {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            grads[i] = obj->eval(samples[i]).grad;
            est.c_hat = std::max(est.c_hat, linf_norm(grads[i]));
        }
        for (std::size_t i = 0; i < samples.size(); ++i) {
            for (std::size_t j = i + 1; j < samples.size(); ++j) {
                GradVector dtheta(samples[i].size());
                GradVector dgrad(grads[i].size());
                for (std::size_t c = 0; c < dtheta.size(); ++c) {
                    dtheta[c] = samples[i][c] - samples[j][c];
                    dgrad[c] = grads[i][c] - grads[j][c];
                }
                const double denom = l2_norm(dtheta);
                if (denom == 0.0) continue;  // coincident points carry no slope information
                any_pair = true;
                est.l_hat = std::max(est.l_hat, l2_norm(dgrad) / denom);
            }
        }
    }
    if (!any_pair)
        throw std::invalid_argument("estimate_constants: all parameter samples coincide");
    return est;
}

ConstantEstimates estimate_constants(const MlpSpec& spec, const std::vector<ParamVector>& samples,
                                     const std::vector<LabeledBatch>& batches) {
    if (batches.empty()) throw std::invalid_argument("estimate_constants: no batches");
    std::vector<std::shared_ptr<const Objective>> objectives;
    objectives.reserve(batches.size());
    for (const auto& b : batches)
        objectives.push_back(std::make_shared<MlpTaskObjective>(spec, b));
    return estimate_constants(objectives, samples);
}

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("loglog_slope: length mismatch");
    if (xs.size() < 2) throw std::invalid_argument("loglog_slope: need at least 2 points");
    std::vector<double> lx(xs.size()), ly(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
            throw std::invalid_argument("loglog_slope: values must be > 0");
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(ly.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    if (den == 0.0) throw std::invalid_argument("loglog_slope: xs are all identical");
    return num / den;
}

double convergence_slope(const RunTrace& trace) {
    const std::size_t n = trace.steps.size();
    if (n < 32)
        throw std::invalid_argument(
            "convergence_slope: trace must have at least 32 steps (two prefix points)");
    for (std::size_t t = 0; t < n; ++t)
        if (!(trace.steps[t].grad_norm_sq > 0.0))
            throw std::invalid_argument("convergence_slope: nonpositive grad_norm_sq at step " +
                                        std::to_string(t));
    std::vector<double> lengths, averages;
    double running = 0.0;
    std::size_t next_prefix = 16;
    for (std::size_t t = 0; t < n; ++t) {
        running += trace.steps[t].grad_norm_sq;
        if (t + 1 == next_prefix) {
            lengths.push_back(static_cast<double>(next_prefix));
            averages.push_back(running / static_cast<double>(next_prefix));
            next_prefix *= 2;
        }
    }
    return loglog_slope(lengths, averages);
}

KlTermGroups kl_term_groups(const ParamVector& theta_hat, double sigma_p_sq, double alpha,
                            double delta) {
    if (!(sigma_p_sq > 0.0))
        throw std::invalid_argument("kl_term_groups: prior variance must be > 0");
    const double v = alpha * alpha + delta * delta;
    if (!(v > 0.0))
        throw std::invalid_argument("kl_term_groups: posterior variance alpha^2 + delta^2 must be > 0");
    if (theta_hat.size() == 0) throw std::invalid_argument("kl_term_groups: empty parameters");
    const double d = static_cast<double>(theta_hat.size());
    KlTermGroups g;
    g.scaled_variance = 0.5 * d * (v / sigma_p_sq);
    double sq = 0.0;
    for (std::size_t i = 0; i < theta_hat.size(); ++i) sq += theta_hat[i] * theta_hat[i];
    g.mean_shift = 0.5 * sq / sigma_p_sq;
    g.log_ratio = 0.5 * d * (std::log(sigma_p_sq / v) - 1.0);
    return g;
}

double kl_gaussians(const ParamVector& theta_hat, double sigma_p_sq, double alpha, double delta) {
    return kl_term_groups(theta_hat, sigma_p_sq, alpha, delta).total();
}

double min_prior_variance(double alpha, double delta) {
    if (alpha < 0.0 || delta < 0.0)
        throw std::invalid_argument("min_prior_variance: radii must be >= 0");
    return (alpha * alpha + delta * delta) * std::exp(1.0);
}

void PacInputs::validate() const {
    if (theta_hat.size() == 0) throw std::invalid_argument("PacInputs: empty parameters");
    if (!(sigma_p_sq > 0.0)) throw std::invalid_argument("PacInputs: prior variance must be > 0");
    if (!(alpha * alpha + delta * delta > 0.0))
        throw std::invalid_argument("PacInputs: posterior variance alpha^2 + delta^2 must be > 0");
    if (K < 1) throw std::invalid_argument("PacInputs: K must be >= 1");
    if (!(psi > 0.0) || !(psi < 1.0)) throw std::invalid_argument("PacInputs: psi must be in (0,1)");
    if (U < 0.0) throw std::invalid_argument("PacInputs: U must be >= 0");
    if (losses.empty()) throw std::invalid_argument("PacInputs: losses must be nonempty");
    for (double l : losses)
        if (!(l >= 0.0) || !(l <= 1.0))
            throw std::invalid_argument("PacInputs: losses must lie in [0,1]");
}

double pac_bound(const PacInputs& p) {
    p.validate();
    const double kl = kl_gaussians(p.theta_hat, p.sigma_p_sq, p.alpha, p.delta);
    double mean = 0.0;
    for (double l : p.losses) mean += l;
    mean /= static_cast<double>(p.losses.size());
    const double K = static_cast<double>(p.K);
    const double complexity = std::sqrt((kl + std::log(2.0 * std::sqrt(K) / p.psi)) / (2.0 * K));
    return mean + complexity + p.U;
}

}  // namespace metasharp
