#pragma once

#include <memory>
#include <vector>

#include "metasharp/mlp.hpp"
#include "metasharp/params.hpp"

namespace metasharp {

/// Differentiable scalar objective of a parameter vector. Meta-learning,
/// the sharpness ops, and the theory diagnostics all consume this interface;
/// concrete instances bind a network to a batch or provide closed forms.
/// Implementations must be pure: eval() has no side effects and is safe to
/// call concurrently from multiple threads.
class Objective {
  public:
    virtual ~Objective() = default;
    virtual std::size_t dim() const = 0;
    virtual LossGrad eval(const ParamVector& theta) const = 0;
    /// Loss only; default delegates to eval().
    virtual double value(const ParamVector& theta) const { return eval(theta).loss; }
};

/// task_loss of a network on one batch.
class MlpTaskObjective final : public Objective {
  public:
    MlpTaskObjective(MlpSpec spec, LabeledBatch batch);
    std::size_t dim() const override { return spec_.param_count(); }
    LossGrad eval(const ParamVector& theta) const override;
    const MlpSpec& spec() const { return spec_; }
    const LabeledBatch& batch() const { return batch_; }

  private:
    MlpSpec spec_;
    LabeledBatch batch_;
};

/// 0.5 * sum_i curvature_i * (theta_i - center_i)^2 with curvature_i > 0.
/// Closed-form value and gradient; the strongly convex test family.
class QuadraticObjective final : public Objective {
  public:
    QuadraticObjective(std::vector<double> curvature, std::vector<double> center);
    std::size_t dim() const override { return curvature_.size(); }
    LossGrad eval(const ParamVector& theta) const override;
    double value(const ParamVector& theta) const override;
    const std::vector<double>& curvature() const { return curvature_; }
    const std::vector<double>& center() const { return center_; }

  private:
    std::vector<double> curvature_;
    std::vector<double> center_;
};

/// Decorator clamping every reported gradient coordinate to [-c, c], making
/// the uniform-gradient-bound assumption hold by construction. Loss values
/// pass through unchanged.
class ClippedObjective final : public Objective {
  public:
    ClippedObjective(std::shared_ptr<const Objective> base, double c);
    std::size_t dim() const override { return base_->dim(); }
    LossGrad eval(const ParamVector& theta) const override;
    double value(const ParamVector& theta) const override { return base_->value(theta); }

  private:
    std::shared_ptr<const Objective> base_;
    double c_;
};

/// Applies the configured clip bound if positive, otherwise passes through.
std::shared_ptr<const Objective> maybe_clipped(std::shared_ptr<const Objective> base, double clip_c);

} // namespace metasharp
