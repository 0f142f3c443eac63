#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "distilts/autodiff.hpp"

namespace distilts {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Denominator floor for the relative error, so coordinates whose true
    // derivative is ~0 are judged on absolute error instead.
    double abs_floor = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
    bool passed = true;
};

// Builds the scalar loss from the current contents of the parameter arrays.
// The function must bind every array it reads through the given binder.
using LossGraph = std::function<Var(ParamBinder&)>;

// Compares reverse-mode gradients against central differences
// (f(x + h) - f(x - h)) / 2h, coordinate by coordinate. Parameters are
// perturbed in place and restored.
inline GradCheckReport grad_check(const LossGraph& f, std::span<Array* const> params,
                                  const GradCheckOptions& opts = {}) {
    if (!(opts.step > 0.0)) throw ContractError("diffcore", "grad_check step must be positive");

    std::vector<Array> analytic;
    {
        ParamBinder binder;
        Var loss = f(binder);
        backward(loss);
        for (Array* p : params) {
            analytic.push_back(binder.is_bound(*p) ? binder.grad(*p) : Array(p->shape(), 0.0));
        }
    }

    auto evaluate = [&] {
        ParamBinder binder(false);
        return f(binder).item();
    };

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto data = params[pi]->data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + opts.step;
            const double up = evaluate();
            data[i] = orig - opts.step;
            const double down = evaluate();
            data[i] = orig;
            const double numeric = (up - down) / (2.0 * opts.step);
            const double a = analytic[pi][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), opts.abs_floor});
            const double rel = std::fabs(a - numeric) / denom;
            ++report.coordinates;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = pi;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error < opts.tolerance;
    return report;
}

inline GradCheckReport grad_check(const LossGraph& f, std::initializer_list<Array*> params,
                                  const GradCheckOptions& opts = {}) {
    std::vector<Array*> v(params);
    return grad_check(f, std::span<Array* const>(v), opts);
}

}  // namespace distilts
