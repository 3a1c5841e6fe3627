#pragma once

#include <cstdint>

#include "skin/tensor.hpp"

namespace skin {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

/// Per-parameter Adam moments. The buffers are sized lazily on the first step.
struct AdamState {
    Tensor m;
    Tensor v;
    std::int64_t t = 0;
};

/// One bias-corrected Adam update driven by param.grad(). The gradient is
/// left untouched; zeroing it is the caller's job.
void adam_step(Tensor& param, AdamState& state, const AdamHyper& hyper);

}  // namespace skin
