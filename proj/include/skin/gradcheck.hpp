#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>

#include "skin/tensor.hpp"

namespace skin {

struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A scalar objective over externally owned tensors. Called with `true` it
/// must also accumulate d(objective)/d(input) into each input's grad buffer;
/// called with `false` it only evaluates.
using Objective = std::function<double(bool with_grad)>;

struct GradCheckOptions {
    double h = 1e-5;
    // Denominator floor: err = |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
    // 0 checks every element; otherwise an evenly strided subset per input.
    std::size_t max_elements_per_input = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares the reverse-mode gradient against central differences
/// (f(x+h) - f(x-h)) / 2h element by element. Inputs are restored exactly.
GradCheckResult grad_check(const Objective& f, std::span<Tensor* const> inputs,
                           const GradCheckOptions& options = {});

}  // namespace skin
