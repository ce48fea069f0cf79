#include "metasharp/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace metasharp {

const char* const kTraceCsvHeader = "t,outer_loss,grad_norm_sq,perturbed_grad_norm,surrogate_gap,align_cos,step_ns";

namespace {

std::vector<double> pick(const std::vector<MetaStepReport>& steps, double MetaStepReport::*field) {
    std::vector<double> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.*field);
    return out;
}

void append_g17(std::string& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

} // namespace

std::vector<double> RunTrace::column_outer_loss() const { return pick(steps, &MetaStepReport::outer_loss); }
std::vector<double> RunTrace::column_grad_norm_sq() const { return pick(steps, &MetaStepReport::grad_norm_sq); }
std::vector<double> RunTrace::column_perturbed_grad_norm() const {
    return pick(steps, &MetaStepReport::perturbed_grad_norm);
}
std::vector<double> RunTrace::column_surrogate_gap() const { return pick(steps, &MetaStepReport::surrogate_gap); }
std::vector<double> RunTrace::column_align_cos() const { return pick(steps, &MetaStepReport::align_cos); }

std::string trace_csv_string(const RunTrace& trace) {
    std::string out(kTraceCsvHeader);
    out += '\n';
    for (const auto& s : trace.steps) {
        out += std::to_string(s.t);
        out += ',';
        append_g17(out, s.outer_loss);
        out += ',';
        append_g17(out, s.grad_norm_sq);
        out += ',';
        append_g17(out, s.perturbed_grad_norm);
        out += ',';
        append_g17(out, s.surrogate_gap);
        out += ',';
        append_g17(out, s.align_cos);
        out += ',';
        out += std::to_string(s.step_ns);
        out += '\n';
    }
    return out;
}

void save_trace_csv(const std::string& path, const RunTrace& trace) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_trace_csv: cannot open " + path);
    const std::string body = trace_csv_string(trace);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw std::runtime_error("save_trace_csv: write failed for " + path);
}

RunTrace load_trace_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_trace_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("load_trace_csv: " + path + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceCsvHeader) {
        // Name exactly which required columns the file is missing, so a
        // column-level problem is diagnosable without opening the file.
        auto split = [](const std::string& s) {
            std::vector<std::string> out;
            std::stringstream ss(s);
            std::string cell;
            while (std::getline(ss, cell, ',')) out.push_back(cell);
            return out;
        };
        const std::vector<std::string> want = split(kTraceCsvHeader);
        const std::vector<std::string> got = split(line);
        std::string missing;
        for (const auto& w : want)
            if (std::find(got.begin(), got.end(), w) == got.end())
                missing += (missing.empty() ? "" : ", ") + w;
        if (!missing.empty())
            throw std::runtime_error("load_trace_csv: " + path + " is missing required column(s): " +
                                     missing);
        throw std::runtime_error("load_trace_csv: bad header in " + path + ": \"" + line + "\"");
    }

    RunTrace trace;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7)
            throw std::runtime_error("load_trace_csv: line " + std::to_string(lineno) + " has " +
                                     std::to_string(cells.size()) + " columns, expected 7");
        MetaStepReport s;
        try {
            s.t = std::stoull(cells[0]);
            s.outer_loss = std::stod(cells[1]);
            s.grad_norm_sq = std::stod(cells[2]);
            s.perturbed_grad_norm = std::stod(cells[3]);
            s.surrogate_gap = std::stod(cells[4]);
            s.align_cos = std::stod(cells[5]);
            s.step_ns = std::stoull(cells[6]);
        } catch (const std::exception&) {
            throw std::runtime_error("load_trace_csv: unparsable value on line " + std::to_string(lineno));
        }
        trace.steps.push_back(std::move(s));
    }
    return trace;
}

} // namespace metasharp
