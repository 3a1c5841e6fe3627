#include "skin/skin_model.hpp"

#include <cmath>

namespace skin {

namespace {
Tensor small_normal(Shape shape, rnd::Engine& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = rnd::normal(rng, 0.0, 0.02);
    }
    return t;
}
}  // namespace

SkinParams SkinParams::init(const EncoderConfig& lite, const EncoderConfig& strong, std::size_t classes,
                            rnd::Engine& rng) {
    if (classes < 2) {
        throw ConfigError("model needs at least 2 classes");
    }
    SkinParams p;
    p.lite = EncoderParams::init(lite, rng);
    const std::size_t dg = lite.d_model;
    p.w_a = small_normal({1, dg}, rng);
    p.w_op = small_normal({classes, dg}, rng);
    p.b_op = Tensor({classes});
    p.strong = EncoderParams::init(strong, rng);
    p.w_o = small_normal({classes, strong.d_model + dg}, rng);
    p.b_o = Tensor({classes});
    return p;
}

SkinParams SkinParams::zeros_like() const {
    SkinParams z;
    z.lite = lite.zeros_like();
    z.w_a = Tensor(w_a.shape());
    z.w_op = Tensor(w_op.shape());
    z.b_op = Tensor(b_op.shape());
    z.strong = strong.zeros_like();
    z.w_o = Tensor(w_o.shape());
    z.b_o = Tensor(b_o.shape());
    return z;
}

ParamList SkinParams::skim_params() {
    ParamList list = lite.params("lite.");
    list.push_back({"w_a", &w_a, ParamRole::weight});
    list.push_back({"w_op", &w_op, ParamRole::weight});
    list.push_back({"b_op", &b_op, ParamRole::bias});
    return list;
}

ParamList SkinParams::params() {
    ParamList list = skim_params();
    ParamList s = strong.params("strong.");
    list.insert(list.end(), s.begin(), s.end());
    list.push_back({"w_o", &w_o, ParamRole::weight});
    list.push_back({"b_o", &b_o, ParamRole::bias});
    return list;
}

Tensor saa_logits(const Tensor& p, const Tensor& w_a) {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.cols()));
    // W_a·pᵀ is [1×n]; flatten to [n].
    Tensor logits = ops::scale(ops::matmul_bt(w_a, p), inv_sqrt);
    return logits.reshaped({p.rows()});
}

Tensor global_vector(const Tensor& g, const Tensor& p) {
    if (g.size() != p.rows()) {
        throw DimensionError("global_vector: weights " + shape_str(g.shape()) + " vs encodings " +
                             shape_str(p.shape()));
    }
    return ops::matmul(g.reshaped({1, g.size()}), p).reshaped({p.cols()});
}

SkimOutput skim_forward(const SegmentedDoc& doc, const SkinParams& params, bool train, rnd::Engine* rng,
                        SkimCache* cache) {
    const std::size_t n = doc.n;
    const std::size_t dg = params.d_g();
    SkimOutput out;
    out.p = Tensor({n, dg});
    if (cache != nullptr) {
        cache->wrapped.assign(n, {});
        cache->segments.assign(n, {});
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<TokenId> wrapped = wrap_specials(doc.segment(i));
        EncoderCache* enc_cache = cache ? &cache->segments[i] : nullptr;
        Tensor enc = encode(wrapped, params.lite, train, rng, enc_cache);
        Tensor pooled = pool(enc, wrapped, params.lite.config);
        std::copy(pooled.data().begin(), pooled.data().end(), out.p.row(i).begin());
        if (cache != nullptr) {
            cache->wrapped[i] = std::move(wrapped);
        }
    }
    out.logits = saa_logits(out.p, params.w_a);
    out.g = ops::row_softmax(out.logits);
    out.r_g = global_vector(out.g, out.p);
    out.o_pre = ops::row_softmax(ops::add(ops::matvec(params.w_op, out.r_g), params.b_op));
    return out;
}

void skim_backward(const SkinParams& params, const SkimCache& cache, const SkimOutput& out,
                   const Tensor* d_o_pre, const Tensor* d_r_g, SkinParams& grads) {
    const std::size_t n = out.p.rows();
    const std::size_t dg = out.p.cols();
    Tensor drg({dg});
    if (d_o_pre != nullptr) {
        Tensor dz = ops::row_softmax_backward(out.o_pre, *d_o_pre);
        auto mv = ops::matvec_backward(params.w_op, out.r_g, dz);
        ops::add_into(grads.w_op, mv.dw);
        ops::add_into(grads.b_op, dz);
        ops::add_into(drg, mv.dx);
    }
    if (d_r_g != nullptr) {
        ops::add_into(drg, *d_r_g);
    }

    // r_g = g·p
    Tensor dg_w({n});
    Tensor dp({n, dg});
    for (std::size_t i = 0; i < n; ++i) {
        auto pi = out.p.row(i);
        auto dpi = dp.row(i);
        double acc = 0.0;
        for (std::size_t c = 0; c < dg; ++c) {
            acc += drg[c] * pi[c];
            dpi[c] = out.g[i] * drg[c];
        }
        dg_w[i] = acc;
    }
    // g = softmax(logits), logits = W_a·pᵀ/√d_g
    Tensor dlogits = ops::row_softmax_backward(out.g, dg_w);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dg));
    for (std::size_t i = 0; i < n; ++i) {
        auto pi = out.p.row(i);
        auto dpi = dp.row(i);
        const double s = dlogits[i] * inv_sqrt;
        for (std::size_t c = 0; c < dg; ++c) {
            grads.w_a[c] += s * pi[c];
            dpi[c] += s * params.w_a[c];
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        Tensor dpi({dg}, std::vector<double>(dp.row(i).begin(), dp.row(i).end()));
        Tensor denc = pool_backward(dpi, cache.wrapped[i], params.lite.config);
        encode_backward(params.lite, cache.segments[i], denc, grads.lite);
    }
}

std::pair<std::size_t, std::size_t> key_span_bounds(std::size_t k, std::size_t n, std::size_t l) {
    validate_segmentation(n, l);
    if (k >= n) {
        throw ConfigError("key index " + std::to_string(k) + " outside [0, " + std::to_string(n) + ")");
    }
    const std::size_t span = l + l / 2;
    if (k == 0) {
        return {0, span};
    }
    if (k == n - 1) {
        return {l * (n - 1) - l / 2, l * n};
    }
    // l(k-1) - l/4 is negative for k == 1; the window slides right to start at 0.
    if (l * (k - 1) < l / 4) {
        return {0, span};
    }
    return {l * (k - 1) - l / 4, l * k + l / 4};
}

KeySegment select_key_segment(const Tensor& g, const SegmentedDoc& doc) {
    validate_segmentation(doc.n, doc.l);
    if (g.size() != doc.n) {
        throw DimensionError("select_key_segment: " + std::to_string(g.size()) + " weights for " +
                             std::to_string(doc.n) + " segments");
    }
    std::size_t k = 0;
    for (std::size_t i = 1; i < g.size(); ++i) {
        if (g[i] > g[k]) {
            k = i;
        }
    }
    const auto [start, end] = key_span_bounds(k, doc.n, doc.l);
    KeySegment key;
    key.k = k;
    key.start = start;
    key.span.assign(doc.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                    doc.tokens.begin() + static_cast<std::ptrdiff_t>(end));
    return key;
}

IntensiveOutput intensive_forward(const KeySegment& key, const SkimOutput& skim, const SkinParams& params,
                                  bool train, rnd::Engine* rng, IntensiveCache* cache, bool ablate_local) {
    IntensiveOutput out;
    if (ablate_local) {
        out.r_l = Tensor({params.d_l()});
    } else {
        std::vector<TokenId> wrapped = wrap_specials(key.span);
        Tensor enc = encode(wrapped, params.strong, train, rng, cache ? &cache->encoder : nullptr);
        out.r_l = pool(enc, wrapped, params.strong.config);
        if (cache != nullptr) {
            cache->wrapped = std::move(wrapped);
        }
    }
    out.r = ops::concat(out.r_l, skim.r_g);
    out.o = ops::row_softmax(ops::add(ops::matvec(params.w_o, out.r), params.b_o));
    return out;
}

Tensor intensive_backward(const SkinParams& params, const IntensiveCache& cache, const IntensiveOutput& out,
                          const Tensor& d_o, SkinParams& grads, bool ablate_local) {
    Tensor dz = ops::row_softmax_backward(out.o, d_o);
    auto mv = ops::matvec_backward(params.w_o, out.r, dz);
    ops::add_into(grads.w_o, mv.dw);
    ops::add_into(grads.b_o, dz);
    const std::size_t dl = params.d_l();
    const std::size_t dg = params.d_g();
    auto dr = mv.dx.data();
    Tensor d_rg({dg}, std::vector<double>(dr.begin() + static_cast<std::ptrdiff_t>(dl), dr.end()));
    if (!ablate_local) {
        Tensor d_rl({dl}, std::vector<double>(dr.begin(), dr.begin() + static_cast<std::ptrdiff_t>(dl)));
        Tensor denc = pool_backward(d_rl, cache.wrapped, params.strong.config);
        encode_backward(params.strong, cache.encoder, denc, grads.strong);
    }
    return d_rg;
}

}  // namespace skin
