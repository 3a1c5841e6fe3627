#include "skin/ops.hpp"

#include <algorithm>
#include <cmath>

#include "skin/kernels.hpp"

namespace skin::ops {

namespace {
void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
    }
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    Tensor c({a.rows(), b.cols()});
    kernels::matmul_nn(a.rows(), a.cols(), b.cols(), a.data(), b.data(), c.data());
    return c;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc) {
    // dA = dC·Bᵀ, dB = Aᵀ·dC
    Tensor da({a.rows(), a.cols()});
    Tensor db({b.rows(), b.cols()});
    kernels::matmul_nt(a.rows(), b.cols(), a.cols(), dc.data(), b.data(), da.data());
    kernels::matmul_tn(b.rows(), a.rows(), b.cols(), a.data(), dc.data(), db.data());
    return {std::move(da), std::move(db)};
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_bt");
    require_matrix(b, "matmul_bt");
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_bt: inner dimensions differ for " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()) + "ᵀ");
    }
    Tensor c({a.rows(), b.rows()});
    kernels::matmul_nt(a.rows(), a.cols(), b.rows(), a.data(), b.data(), c.data());
    return c;
}

MatmulGrads matmul_bt_backward(const Tensor& a, const Tensor& b, const Tensor& dc) {
    // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A
    Tensor da({a.rows(), a.cols()});
    Tensor db({b.rows(), b.cols()});
    kernels::matmul_nn(a.rows(), b.rows(), a.cols(), dc.data(), b.data(), da.data());
    kernels::matmul_tn(b.rows(), a.rows(), a.cols(), dc.data(), a.data(), db.data());
    return {std::move(da), std::move(db)};
}

Tensor matvec(const Tensor& w, const Tensor& x) {
    require_matrix(w, "matvec");
    if (x.rank() != 1 || w.cols() != x.size()) {
        throw DimensionError("matvec: " + shape_str(w.shape()) + " times " + shape_str(x.shape()));
    }
    Tensor y({w.rows()});
    for (std::size_t i = 0; i < w.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < w.cols(); ++j) {
            acc += w.at(i, j) * x[j];
        }
        y[i] = acc;
    }
    return y;
}

MatvecGrads matvec_backward(const Tensor& w, const Tensor& x, const Tensor& dy) {
    Tensor dw({w.rows(), w.cols()});
    Tensor dx({w.cols()});
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            dw.at(i, j) = dy[i] * x[j];
            dx[j] += w.at(i, j) * dy[i];
        }
    }
    return {std::move(dw), std::move(dx)};
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || bias.size() != x.cols()) {
        throw DimensionError("add_row_bias: " + shape_str(x.shape()) + " with bias " +
                             shape_str(bias.shape()));
    }
    Tensor y = x;
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += bias[c];
        }
    }
    return y;
}

Tensor column_sums(const Tensor& dy) {
    Tensor out({dy.cols()});
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto row = dy.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            out[c] += row[c];
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor y = a;
    add_into(y, b);
    return y;
}

void add_into(Tensor& acc, const Tensor& x) {
    require_same_shape(acc, x, "add_into");
    add_into(acc.data(), x.data());
}

void add_into(std::span<double> acc, std::span<const double> x) {
    if (acc.size() != x.size()) {
        throw DimensionError("add_into: " + std::to_string(acc.size()) + " vs " +
                             std::to_string(x.size()) + " elements");
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i] += x[i];
    }
}

Tensor scale(const Tensor& x, double factor) {
    Tensor y = x;
    for (auto& v : y.data()) {
        v *= factor;
    }
    return y;
}

Tensor row_softmax(const Tensor& x) {
    Tensor y = x;
    const std::size_t rows = x.rows();
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = y.row(r);
        if (row.empty()) {
            continue;
        }
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (auto& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (auto& v : row) {
            v /= sum;
        }
    }
    return y;
}

Tensor row_softmax_backward(const Tensor& y, const Tensor& dy) {
    require_same_shape(y, dy, "row_softmax_backward");
    Tensor dx(y.shape());
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        auto dyr = dy.row(r);
        auto dxr = dx.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < yr.size(); ++c) {
            dot += yr[c] * dyr[c];
        }
        for (std::size_t c = 0; c < yr.size(); ++c) {
            dxr[c] = yr[c] * (dyr[c] - dot);
        }
    }
    return dx;
}

Tensor mean_pool(const Tensor& x) {
    require_matrix(x, "mean_pool");
    if (x.rows() == 0) {
        throw EmptyInputError("mean_pool: input has no rows");
    }
    Tensor out = column_sums(x);
    const double inv = 1.0 / static_cast<double>(x.rows());
    for (auto& v : out.data()) {
        v *= inv;
    }
    return out;
}

Tensor mean_pool_backward(const Tensor& dy, std::size_t rows) {
    if (rows == 0) {
        throw EmptyInputError("mean_pool_backward: zero rows");
    }
    Tensor dx({rows, dy.size()});
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = dx.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = dy[c] * inv;
        }
    }
    return dx;
}

Tensor masked_mean_pool(const Tensor& x, const std::vector<bool>& keep) {
    require_matrix(x, "masked_mean_pool");
    if (keep.size() != x.rows()) {
        throw DimensionError("masked_mean_pool: mask length differs from row count");
    }
    const auto count = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
    if (count == 0) {
        throw EmptyInputError("masked_mean_pool: every row is masked");
    }
    Tensor out({x.cols()});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        if (keep[r]) {
            add_into(out.data(), x.row(r));
        }
    }
    for (auto& v : out.data()) {
        v /= static_cast<double>(count);
    }
    return out;
}

Tensor masked_mean_pool_backward(const Tensor& dy, const std::vector<bool>& keep) {
    const auto count = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
    if (count == 0) {
        throw EmptyInputError("masked_mean_pool_backward: every row is masked");
    }
    Tensor dx({keep.size(), dy.size()});
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t r = 0; r < keep.size(); ++r) {
        if (!keep[r]) {
            continue;
        }
        auto row = dx.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = dy[c] * inv;
        }
    }
    return dx;
}

MaxPool max_pool(const Tensor& x) {
    require_matrix(x, "max_pool");
    if (x.rows() == 0) {
        throw EmptyInputError("max_pool: input has no rows");
    }
    MaxPool result{Tensor({x.cols()}), std::vector<std::size_t>(x.cols(), 0)};
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double best = x.at(0, c);
        std::size_t arg = 0;
        for (std::size_t r = 1; r < x.rows(); ++r) {
            if (x.at(r, c) > best) {
                best = x.at(r, c);
                arg = r;
            }
        }
        result.out[c] = best;
        result.argmax[c] = arg;
    }
    return result;
}

Tensor max_pool_backward(const MaxPool& pooled, const Tensor& dy, std::size_t rows) {
    Tensor dx({rows, dy.size()});
    for (std::size_t c = 0; c < dy.size(); ++c) {
        dx.at(pooled.argmax[c], c) = dy[c];
    }
    return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache* cache) {
    require_matrix(x, "layer_norm");
    const std::size_t d = x.cols();
    if (gain.size() != d || bias.size() != d) {
        throw DimensionError("layer_norm: " + shape_str(x.shape()) + " with gain " +
                             shape_str(gain.shape()) + " and bias " + shape_str(bias.shape()));
    }
    Tensor y(x.shape());
    Tensor xhat(x.shape());
    std::vector<double> inv_std(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        double mean = 0.0;
        for (double v : xr) {
            mean += v;
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : xr) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_std[r] = is;
        auto hr = xhat.row(r);
        auto yr = y.row(r);
        for (std::size_t c = 0; c < d; ++c) {
            hr[c] = (xr[c] - mean) * is;
            yr[c] = hr[c] * gain[c] + bias[c];
        }
    }
    if (cache != nullptr) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                                   const Tensor& dy) {
    const Tensor& xhat = cache.xhat;
    require_same_shape(xhat, dy, "layer_norm_backward");
    const std::size_t d = xhat.cols();
    const auto dn = static_cast<double>(d);
    LayerNormGrads g{Tensor(xhat.shape()), Tensor({d}), Tensor({d})};
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < xhat.rows(); ++r) {
        auto hr = xhat.row(r);
        auto dyr = dy.row(r);
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            g.dgain[c] += dyr[c] * hr[c];
            g.dbias[c] += dyr[c];
            dxhat[c] = dyr[c] * gain[c];
            sum_dxhat += dxhat[c];
            sum_dxhat_xhat += dxhat[c] * hr[c];
        }
        auto dxr = g.dx.row(r);
        const double is = cache.inv_std[r];
        for (std::size_t c = 0; c < d; ++c) {
            dxr[c] = is * (dxhat[c] - sum_dxhat / dn - hr[c] * sum_dxhat_xhat / dn);
        }
    }
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data()) {
        v = v > 0.0 ? v : 0.0;
    }
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    require_same_shape(x, dy, "relu_backward");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (x[i] <= 0.0) {
            dx[i] = 0.0;
        }
    }
    return dx;
}

Tensor dropout(const Tensor& x, double p, rnd::Engine& rng, std::vector<double>& mask) {
    if (p < 0.0 || p >= 1.0) {
        throw std::invalid_argument("dropout: probability must lie in [0, 1)");
    }
    mask.assign(x.size(), 1.0);
    Tensor y = x;
    if (p == 0.0) {
        return y;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < y.size(); ++i) {
        mask[i] = rnd::uniform01(rng) < p ? 0.0 : keep_scale;
        y[i] *= mask[i];
    }
    return y;
}

Tensor dropout_backward(const std::vector<double>& mask, const Tensor& dy) {
    if (mask.size() != dy.size()) {
        throw DimensionError("dropout_backward: mask size differs from gradient");
    }
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        dx[i] *= mask[i];
    }
    return dx;
}

double cross_entropy(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "cross_entropy");
    const std::size_t rows = pred.rows();
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        auto pr = pred.row(r);
        auto tr = target.row(r);
        double sum = 0.0;
        for (std::size_t c = 0; c < pr.size(); ++c) {
            sum += pr[c];
            if (tr[c] < 0.0) {
                throw ContractError("cross_entropy: negative target entry");
            }
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw ContractError("cross_entropy: prediction row sums to " + std::to_string(sum));
        }
        for (std::size_t c = 0; c < pr.size(); ++c) {
            if (tr[c] != 0.0) {
                total -= tr[c] * std::log(std::clamp(pr[c], kLogClamp, 1.0));
            }
        }
    }
    return total / static_cast<double>(rows);
}

Tensor cross_entropy_backward(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "cross_entropy_backward");
    const double inv_rows = 1.0 / static_cast<double>(pred.rows());
    Tensor d(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        // The clamp has zero slope below its floor.
        d[i] = pred[i] < kLogClamp ? 0.0 : -target[i] / pred[i] * inv_rows;
    }
    return d;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) {
        throw DimensionError("concat: expected vectors, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    std::vector<double> values(a.data().begin(), a.data().end());
    values.insert(values.end(), b.data().begin(), b.data().end());
    const std::size_t total = values.size();
    return Tensor({total}, std::move(values));
}

double sum_squares(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) {
        s += v * v;
    }
    return s;
}

}  // namespace skin::ops
