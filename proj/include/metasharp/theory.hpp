#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "metasharp/mlp.hpp"
#include "metasharp/objective.hpp"
#include "metasharp/params.hpp"
#include "metasharp/tasks.hpp"
#include "metasharp/trace.hpp"

namespace metasharp {

// Inputs shared by the two convergence bounds. C is the per-coordinate
// gradient bound enforced by clipping, d the parameter dimension, L_lip the
// gradient-Lipschitz constant, and (alpha, delta, gamma) the sharpness-aware
// step hyperparameters. L0/L_star are the initial and best attainable losses;
// sigma1_sq/sigma2_sq bound the variances of the stochastic gradient and
// stochastic perturbed-gradient estimators (zero for deterministic runs).
struct BoundInputs {
    double C = 1.0;
    std::size_t d = 1;
    double L_lip = 1.0;
    double alpha = 0.0;
    double delta = 0.0;
    double gamma = 0.0;
    std::size_t T = 1;
    double L0 = 0.0;
    double L_star = 0.0;
    double sigma1_sq = 0.0;
    double sigma2_sq = 0.0;

    // Throws std::invalid_argument unless every field is nonnegative (and
    // finite), T >= 1, d >= 1.
    void validate() const;
};

// k = C*sqrt(d) + alpha - delta*C*sqrt(d): norm bound on gradients evaluated at
// ascent-perturbed points. May be negative when delta > 1 + alpha/(C*sqrt(d));
// the signed value is returned as-is so callers can inspect that regime.
double k_constant(double C, std::size_t d, double alpha, double delta);

// Upper bound on (1/T) * sum_t ||grad L(theta_t)||^2 for the deterministic
// (full-gradient) sharpness-aware analysis:
//   (L0 - L_star)/T
//   + (1/T) * ( gamma*C*sqrt(d)*k + (gamma^2*L + gamma)*C^2*d + gamma^2*L*k^2
//               - (gamma^2*L/2) * (k^2 + C^2*d - 2*k*C*sqrt(d)) )
double convergence_bound_rhs(const BoundInputs& b);

// Stochastic variant of the same bound, charging the estimator variances:
//   (L0 - L_star)/T
//   + (1/T) * ( gamma * (A + sqrt(A*B)) + L*gamma^2 * (A + B + 2*sqrt(A*B)) )
// with A = C^2*d + sigma1_sq and B = k^2 + sigma2_sq. At zero variances this
// remains a valid bound but is not identical to convergence_bound_rhs (its
// gamma^2 term is looser); the two are separate results, not one formula.
double stochastic_convergence_bound_rhs(const BoundInputs& b);

// ||grad L_p - grad L||^2 reconstructed from trace columns: grad_norm_sq is
// ||grad L||^2, perturbed_grad_norm is ||grad L_p||, align_cos the cosine
// between the two gradients.
double surrogate_grad_norm_sq(double grad_norm_sq, double perturbed_grad_norm, double align_cos);

// Per-step bound check over a trace: min over steps of rhs - lhs (negative
// means the bound was violated somewhere), together with the step where the
// worst margin occurred.
struct BoundCheck {
    std::string name;
    double rhs = 0.0;
    double worst_lhs = 0.0;
    double min_margin = 0.0;
    std::size_t worst_step = 0;
};

// The three per-iteration gradient bounds implied by k:
//   perturbed_grad:           ||grad L_p||_2 <= k
//   surrogate_grad_sq:        ||grad L_p - grad L||^2 <= k^2 - 2k*C*sqrt(d) + C^2*d
//   noisy_surrogate_grad_sq:  same quantity against the variance-adjusted bound
//       C^2*d + k^2 + sigma1_sq + sigma2_sq
//       - 2*sqrt((C^2*d + sigma1_sq) * (k^2 + sigma2_sq))
// (which reduces to the noiseless bound at zero variances).
struct StepBoundReport {
    double k = 0.0;
    BoundCheck perturbed_grad;
    BoundCheck surrogate_grad_sq;
    BoundCheck noisy_surrogate_grad_sq;
};

// Scans a trace recorded with gradient clipping at C engaged and reports the
// margin of each per-step bound. Throws std::invalid_argument on an empty
// trace or non-finite columns. Negative variance inputs are rejected.
StepBoundReport step_bound_report(const RunTrace& trace, double C, std::size_t d, double alpha,
                                  double delta, double sigma1_sq = 0.0, double sigma2_sq = 0.0);

// Empirical stand-ins for the assumed constants: c_hat is the largest observed
// ||grad||_inf, l_hat the largest observed ||grad(x1) - grad(x2)|| / ||x1 - x2||
// over sample pairs evaluated on the same objective.
struct ConstantEstimates {
    double c_hat = 0.0;
    double l_hat = 0.0;
};

// Requires at least two parameter samples and one objective. Coincident sample
// pairs are skipped for l_hat; if every pair coincides, throws.
ConstantEstimates estimate_constants(const std::vector<std::shared_ptr<const Objective>>& objectives,
                                     const std::vector<ParamVector>& samples);

// Convenience overload: one MLP objective per labeled batch.
ConstantEstimates estimate_constants(const MlpSpec& spec, const std::vector<ParamVector>& samples,
                                     const std::vector<LabeledBatch>& batches);

// Least-squares slope of log(ys) against log(xs). Requires matching lengths,
// at least two points, strictly positive values, and non-identical xs.
double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys);

// Least-squares slope of log((1/T') * sum_{t<T'} grad_norm_sq) against
// log(T'), over prefix lengths T' = 16, 32, 64, ... up to the trace length.
// Requires a trace of length >= 32 (at least two prefix points) and strictly
// positive grad_norm_sq everywhere. A decay like 1/t yields a slope near -1;
// a constant trace yields exactly 0.
double convergence_slope(const RunTrace& trace);

// KL(posterior || prior) for posterior N(theta_hat, (alpha^2+delta^2) I) and
// prior N(0, sigma_p_sq I), split into its three nonnegative-candidate groups:
//   scaled_variance: d/2 * v / sigma_p_sq              (always >= 0)
//   mean_shift:      ||theta_hat||^2 / (2 sigma_p_sq)  (always >= 0)
//   log_ratio:       d/2 * (ln(sigma_p_sq / v) - 1)    (>= 0 iff sigma_p_sq >= v*e)
// with v = alpha^2 + delta^2. The total is the exact Gaussian KL.
struct KlTermGroups {
    double scaled_variance = 0.0;
    double mean_shift = 0.0;
    double log_ratio = 0.0;
    double total() const { return scaled_variance + mean_shift + log_ratio; }
};

KlTermGroups kl_term_groups(const ParamVector& theta_hat, double sigma_p_sq, double alpha,
                            double delta);

// Total KL of the groups above. Throws unless sigma_p_sq > 0 and
// alpha^2 + delta^2 > 0.
double kl_gaussians(const ParamVector& theta_hat, double sigma_p_sq, double alpha, double delta);

// Smallest prior variance for which every KL term group is nonnegative:
// (alpha^2 + delta^2) * e.
double min_prior_variance(double alpha, double delta);

// Inputs of the PAC-Bayes generalization bound. K is the task count entering
// the complexity term; losses are empirical per-task losses in [0, 1] (their
// mean is the empirical risk term and their count may differ from K); U is a
// user-supplied uniform-stability constant (no estimator is provided).
struct PacInputs {
    ParamVector theta_hat;
    double alpha = 0.0;
    double delta = 0.0;
    double sigma_p_sq = 1.0;
    std::size_t K = 1;
    double psi = 0.05;
    double U = 0.0;
    std::vector<double> losses;

    void validate() const;
};

// mean(losses) + sqrt((KL + ln(2*sqrt(K)/psi)) / (2K)) + U.
double pac_bound(const PacInputs& p);

}  // namespace metasharp
