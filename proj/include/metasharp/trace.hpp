#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace metasharp {

// One outer-loop iteration's diagnostics. The sharpness columns are computed
// with the same probe construction for every algorithm, so traces from
// different methods are directly comparable.
struct MetaStepReport {
    std::size_t t = 0;
    std::vector<double> inner_losses;   // last support loss seen while adapting (empty if no inner steps)
    double outer_loss = 0.0;            // sum over tasks of query loss at adapted params
    double grad_norm_sq = 0.0;          // ||sum of query gradients||^2
    double perturbed_grad_norm = 0.0;   // ||sum of probe-point gradients||
    double surrogate_gap = 0.0;         // sum of (probe loss - query loss)
    double align_cos = 0.0;             // cosine between summed gradient and probe gradient
    std::uint64_t step_ns = 0;          // wall time; 0 unless timing was enabled
    std::vector<double> inner_eps_norms; // per-task norm of the final inner perturbation
    double outer_eps_norm = 0.0;         // norm of the shared outer perturbation
};

struct RunTrace {
    std::vector<MetaStepReport> steps;

    std::size_t size() const { return steps.size(); }
    bool empty() const { return steps.empty(); }

    // Columns of one trace field, in step order (for bound checks / slopes).
    std::vector<double> column_outer_loss() const;
    std::vector<double> column_grad_norm_sq() const;
    std::vector<double> column_perturbed_grad_norm() const;
    std::vector<double> column_surrogate_gap() const;
    std::vector<double> column_align_cos() const;
};

// CSV layout is pinned: header line
//   t,outer_loss,grad_norm_sq,perturbed_grad_norm,surrogate_gap,align_cos,step_ns
// then one row per step, floats printed with %.17g (round-trip exact).
extern const char* const kTraceCsvHeader;

void save_trace_csv(const std::string& path, const RunTrace& trace);
RunTrace load_trace_csv(const std::string& path);

std::string trace_csv_string(const RunTrace& trace);

} // namespace metasharp
