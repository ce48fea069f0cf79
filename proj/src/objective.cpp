#include "metasharp/objective.hpp"

#include <stdexcept>

namespace metasharp {

MlpTaskObjective::MlpTaskObjective(MlpSpec spec, LabeledBatch batch)
    : spec_(std::move(spec)), batch_(std::move(batch)) {
    spec_.validate();
    if (batch_.size() == 0) throw std::invalid_argument("MlpTaskObjective: empty batch");
}

LossGrad MlpTaskObjective::eval(const ParamVector& theta) const {
    return task_loss(spec_, theta, batch_);
}

QuadraticObjective::QuadraticObjective(std::vector<double> curvature, std::vector<double> center)
    : curvature_(std::move(curvature)), center_(std::move(center)) {
    if (curvature_.empty()) throw std::invalid_argument("QuadraticObjective: empty curvature");
    if (curvature_.size() != center_.size())
        throw std::invalid_argument("QuadraticObjective: curvature/center length mismatch");
    for (double c : curvature_)
        if (!(c > 0.0)) throw std::invalid_argument("QuadraticObjective: curvature must be positive");
}

LossGrad QuadraticObjective::eval(const ParamVector& theta) const {
    if (theta.size() != dim())
        throw std::invalid_argument("QuadraticObjective: parameter length " + std::to_string(theta.size()) +
                                    " != " + std::to_string(dim()));
    LossGrad out;
    out.grad = GradVector(dim());
    double s = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) {
        const double d = theta[i] - center_[i];
        s += curvature_[i] * d * d;
        out.grad[i] = curvature_[i] * d;
    }
    out.loss = 0.5 * s;
    return out;
}

double QuadraticObjective::value(const ParamVector& theta) const {
    if (theta.size() != dim())
        throw std::invalid_argument("QuadraticObjective: parameter length " + std::to_string(theta.size()) +
                                    " != " + std::to_string(dim()));
    double s = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) {
        const double d = theta[i] - center_[i];
        s += curvature_[i] * d * d;
    }
    return 0.5 * s;
}

ClippedObjective::ClippedObjective(std::shared_ptr<const Objective> base, double c)
    : base_(std::move(base)), c_(c) {
    if (!base_) throw std::invalid_argument("ClippedObjective: null base");
    if (!(c_ > 0.0)) throw std::invalid_argument("ClippedObjective: bound must be > 0");
}

LossGrad ClippedObjective::eval(const ParamVector& theta) const {
    LossGrad lg = base_->eval(theta);
    lg.grad = clip_grad_inf(lg.grad, c_);
    return lg;
}

std::shared_ptr<const Objective> maybe_clipped(std::shared_ptr<const Objective> base, double clip_c) {
    if (clip_c > 0.0) return std::make_shared<ClippedObjective>(std::move(base), clip_c);
    return base;
}

} // namespace metasharp
