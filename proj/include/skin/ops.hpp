#pragma once

#include <vector>

#include "skin/random.hpp"
#include "skin/tensor.hpp"

// Forward and backward passes for every differentiable primitive. Backward
// functions are explicit: the caller keeps whatever the forward returned and
// hands the upstream gradient back in. Models compose these into a fixed
// graph; there is no tape.
namespace skin::ops {

struct MatmulGrads {
    Tensor da;
    Tensor db;
};

// [m×k]·[k×n] -> [m×n]
Tensor matmul(const Tensor& a, const Tensor& b);
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc);

// [m×k]·[n×k]ᵀ -> [m×n]
Tensor matmul_bt(const Tensor& a, const Tensor& b);
MatmulGrads matmul_bt_backward(const Tensor& a, const Tensor& b, const Tensor& dc);

// W[m×k]·x[k] -> [m]
Tensor matvec(const Tensor& w, const Tensor& x);
struct MatvecGrads {
    Tensor dw;
    Tensor dx;
};
MatvecGrads matvec_backward(const Tensor& w, const Tensor& x, const Tensor& dy);

// x[L×d] + bias[d] on every row. The only broadcast supported.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
// Column sums of dy: the bias gradient of add_row_bias.
Tensor column_sums(const Tensor& dy);

Tensor add(const Tensor& a, const Tensor& b);
void add_into(Tensor& acc, const Tensor& x);
void add_into(std::span<double> acc, std::span<const double> x);
Tensor scale(const Tensor& x, double factor);

// Numerically stable softmax over the last axis (rows of a matrix, or the
// whole vector for rank 1).
Tensor row_softmax(const Tensor& x);
Tensor row_softmax_backward(const Tensor& y, const Tensor& dy);

// Mean over rows: [L×d] -> [d].
Tensor mean_pool(const Tensor& x);
Tensor mean_pool_backward(const Tensor& dy, std::size_t rows);

// Mean over the rows where keep[r] is true.
Tensor masked_mean_pool(const Tensor& x, const std::vector<bool>& keep);
Tensor masked_mean_pool_backward(const Tensor& dy, const std::vector<bool>& keep);

struct MaxPool {
    Tensor out;                       // [d]
    std::vector<std::size_t> argmax;  // winning row per column, lowest on ties
};
MaxPool max_pool(const Tensor& x);
Tensor max_pool_backward(const MaxPool& pooled, const Tensor& dy, std::size_t rows);

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
    Tensor xhat;
    std::vector<double> inv_std;
};
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  LayerNormCache* cache = nullptr);
struct LayerNormGrads {
    Tensor dx;
    Tensor dgain;
    Tensor dbias;
};
LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                                   const Tensor& dy);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// Inverted dropout. `mask` receives the per-element multiplier (0 or 1/(1-p)).
Tensor dropout(const Tensor& x, double p, rnd::Engine& rng, std::vector<double>& mask);
Tensor dropout_backward(const std::vector<double>& mask, const Tensor& dy);

inline constexpr double kLogClamp = 1e-12;

// -Σ target·ln(clamp(pred)). Rank-2 inputs are treated as a batch of rows and
// the per-row losses are averaged.
double cross_entropy(const Tensor& pred, const Tensor& target);
Tensor cross_entropy_backward(const Tensor& pred, const Tensor& target);

// [a, b] for two vectors.
Tensor concat(const Tensor& a, const Tensor& b);

double sum_squares(const Tensor& x);

}  // namespace skin::ops
