#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mlconvgec/numcore/tape.hpp"

namespace mlconvgec::nc {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Function under test: builds a scalar from the bound inputs on a fresh tape.
using MultiScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
    double step = 1e-5;
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is ~0 are judged on absolute error instead.
    double floor = 1e-6;
    /// When nonzero, only every `stride`-th coordinate of each input is probed.
    std::size_t stride = 1;
};

namespace detail {

inline double eval_scalar(const MultiScalarFn& f, const std::vector<Array>& inputs) {
    Tape tape(false);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& a : inputs) vars.push_back(tape.frozen(a));
    const double v = f(tape, vars).value()[0];
    if (!std::isfinite(v)) fail(ErrorCategory::evaluation, "gradient check: function value is not finite");
    return v;
}

}  // namespace detail

/// Compares reverse-mode gradients with central differences over every
/// coordinate of every input and reports the worst relative error.
inline GradCheckReport check_gradients(const MultiScalarFn& f, std::vector<Array> inputs,
                                       GradCheckOptions opt = {}) {
    std::vector<Array> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& a : inputs) vars.push_back(tape.parameter(a));
        Var out = f(tape, vars);
        if (out.value().size() != 1 || !std::isfinite(out.value()[0])) {
            fail(ErrorCategory::evaluation, "gradient check: function must return a finite scalar");
        }
        tape.backward(out);
        for (std::size_t k = 0; k < vars.size(); ++k) {
            const Array* g = tape.grad(vars[k]);
            analytic.push_back(g ? *g : Array::zeros_like(inputs[k]));
        }
    }

    GradCheckReport report;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); i += std::max<std::size_t>(1, opt.stride)) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + opt.step;
            const double up = detail::eval_scalar(f, inputs);
            inputs[k][i] = orig - opt.step;
            const double down = detail::eval_scalar(f, inputs);
            inputs[k][i] = orig;
            const double numeric = (up - down) / (2.0 * opt.step);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_error) report = {rel, k, i, a, numeric};
        }
    }
    return report;
}

/// Single-input convenience form; returns the maximum relative error.
inline double check_gradients(const std::function<Var(Tape&, Var)>& f, const Array& x,
                              GradCheckOptions opt = {}) {
    MultiScalarFn wrapped = [&f](Tape& t, std::span<const Var> v) { return f(t, v[0]); };
    return check_gradients(wrapped, std::vector<Array>{x}, opt).max_rel_error;
}

}  // namespace mlconvgec::nc
