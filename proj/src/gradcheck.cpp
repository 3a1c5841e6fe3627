#include "skin/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace skin {

namespace {
double evaluate(const Objective& f, bool with_grad) {
    const double value = f(with_grad);
    if (!std::isfinite(value)) {
        throw EvaluationError("grad_check: objective returned a non-finite value");
    }
    return value;
}
}  // namespace

GradCheckResult grad_check(const Objective& f, std::span<Tensor* const> inputs,
                           const GradCheckOptions& options) {
    for (Tensor* t : inputs) {
        t->enable_grad();
        t->zero_grad();
    }
    evaluate(f, true);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (Tensor* t : inputs) {
        analytic.emplace_back(t->grad().begin(), t->grad().end());
    }

    GradCheckResult result;
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        Tensor& x = *inputs[which];
        std::size_t stride = 1;
        if (options.max_elements_per_input != 0 && x.size() > options.max_elements_per_input) {
            stride = (x.size() + options.max_elements_per_input - 1) / options.max_elements_per_input;
        }
        for (std::size_t i = 0; i < x.size(); i += stride) {
            const double saved = x[i];
            x[i] = saved + options.h;
            const double up = evaluate(f, false);
            x[i] = saved - options.h;
            const double down = evaluate(f, false);
            x[i] = saved;
            const double numeric = (up - down) / (2.0 * options.h);
            const double a = analytic[which][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            const double err = std::abs(a - numeric) / denom;
            ++result.checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_input = which;
                result.worst_index = i;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace skin
