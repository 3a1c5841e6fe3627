#include "skin/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace skin {

namespace {

thread_local EncodeCallLog* t_call_log = nullptr;

constexpr double kInitStd = 0.02;
constexpr double kMaskedScore = -1e30;

Tensor normal_tensor(Shape shape, rnd::Engine& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = rnd::normal(rng, 0.0, kInitStd);
    }
    return t;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t width) {
    Tensor out({x.rows(), width});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto src = x.row(r).subspan(start, width);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

void scatter_cols(Tensor& dst, const Tensor& src, std::size_t start) {
    for (std::size_t r = 0; r < src.rows(); ++r) {
        auto s = src.row(r);
        auto d = dst.row(r).subspan(start, s.size());
        for (std::size_t c = 0; c < s.size(); ++c) {
            d[c] += s[c];
        }
    }
}

// x·W + b and its gradients accumulated into (dW, db); returns dx.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return ops::add_row_bias(ops::matmul(x, w), b);
}

Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db) {
    auto g = ops::matmul_backward(x, w, dy);
    ops::add_into(dw, g.db);
    ops::add_into(db, ops::column_sums(dy));
    return std::move(g.da);
}

Tensor maybe_dropout(const Tensor& x, double p, bool train, rnd::Engine* rng,
                     std::vector<double>& mask) {
    if (!train || p == 0.0) {
        mask.clear();
        return x;
    }
    return ops::dropout(x, p, *rng, mask);
}

Tensor maybe_dropout_backward(const std::vector<double>& mask, const Tensor& dy) {
    if (mask.empty()) {
        return dy;
    }
    return ops::dropout_backward(mask, dy);
}

}  // namespace

void EncoderConfig::validate() const {
    if (heads == 0 || d_model == 0 || d_model % heads != 0) {
        throw ConfigError("encoder: d_model " + std::to_string(d_model) +
                          " must be a positive multiple of heads " + std::to_string(heads));
    }
    if (d_ff == 0 || max_len == 0 || vocab < kReservedTokens) {
        throw ConfigError("encoder: d_ff, max_len and vocab must be set");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw ConfigError("encoder: dropout must lie in [0, 1)");
    }
}

EncoderConfig EncoderConfig::lite_desk(std::size_t vocab, std::size_t max_len) {
    return {.layers = 2, .heads = 2, .d_model = 32, .d_ff = 64, .max_len = max_len, .vocab = vocab};
}

EncoderConfig EncoderConfig::strong_desk(std::size_t vocab, std::size_t max_len) {
    return {.layers = 4, .heads = 4, .d_model = 64, .d_ff = 128, .max_len = max_len, .vocab = vocab};
}

EncoderConfig EncoderConfig::lite_paper(std::size_t vocab, std::size_t max_len) {
    return {.layers = 2, .heads = 2, .d_model = 128, .d_ff = 512, .max_len = max_len, .vocab = vocab};
}

EncoderConfig EncoderConfig::strong_paper(std::size_t vocab, std::size_t max_len) {
    return {.layers = 12, .heads = 12, .d_model = 768, .d_ff = 3072, .max_len = max_len, .vocab = vocab};
}

EncoderParams EncoderParams::init(const EncoderConfig& config, rnd::Engine& rng) {
    config.validate();
    const std::size_t d = config.d_model;
    const std::size_t ff = config.d_ff;
    EncoderParams p;
    p.config = config;
    p.tok_emb = normal_tensor({config.vocab, d}, rng);
    p.pos_emb = normal_tensor({config.max_len, d}, rng);
    p.emb_ln_gain = Tensor({d}, 1.0);
    p.emb_ln_bias = Tensor({d});
    p.layers.reserve(config.layers);
    for (std::size_t i = 0; i < config.layers; ++i) {
        LayerParams lp;
        lp.wq = normal_tensor({d, d}, rng);
        lp.bq = Tensor({d});
        lp.wk = normal_tensor({d, d}, rng);
        lp.bk = Tensor({d});
        lp.wv = normal_tensor({d, d}, rng);
        lp.bv = Tensor({d});
        lp.wo = normal_tensor({d, d}, rng);
        lp.bo = Tensor({d});
        lp.ln1_gain = Tensor({d}, 1.0);
        lp.ln1_bias = Tensor({d});
        lp.w1 = normal_tensor({d, ff}, rng);
        lp.b1 = Tensor({ff});
        lp.w2 = normal_tensor({ff, d}, rng);
        lp.b2 = Tensor({d});
        lp.ln2_gain = Tensor({d}, 1.0);
        lp.ln2_bias = Tensor({d});
        p.layers.push_back(std::move(lp));
    }
    return p;
}

EncoderParams EncoderParams::zeros_like() const {
    EncoderParams z = *this;
    zero_values(z.params(""));
    for (const auto& ref : z.params("")) {
        ref.tensor->drop_grad();
    }
    return z;
}

ParamList EncoderParams::params(const std::string& prefix) {
    ParamList list{
        {prefix + "tok_emb", &tok_emb, ParamRole::weight},
        {prefix + "pos_emb", &pos_emb, ParamRole::weight},
        {prefix + "emb_ln.gain", &emb_ln_gain, ParamRole::norm},
        {prefix + "emb_ln.bias", &emb_ln_bias, ParamRole::norm},
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& lp = layers[i];
        const std::string p = prefix + "layer" + std::to_string(i) + ".";
        list.push_back({p + "wq", &lp.wq, ParamRole::weight});
        list.push_back({p + "bq", &lp.bq, ParamRole::bias});
        list.push_back({p + "wk", &lp.wk, ParamRole::weight});
        list.push_back({p + "bk", &lp.bk, ParamRole::bias});
        list.push_back({p + "wv", &lp.wv, ParamRole::weight});
        list.push_back({p + "bv", &lp.bv, ParamRole::bias});
        list.push_back({p + "wo", &lp.wo, ParamRole::weight});
        list.push_back({p + "bo", &lp.bo, ParamRole::bias});
        list.push_back({p + "ln1.gain", &lp.ln1_gain, ParamRole::norm});
        list.push_back({p + "ln1.bias", &lp.ln1_bias, ParamRole::norm});
        list.push_back({p + "w1", &lp.w1, ParamRole::weight});
        list.push_back({p + "b1", &lp.b1, ParamRole::bias});
        list.push_back({p + "w2", &lp.w2, ParamRole::weight});
        list.push_back({p + "b2", &lp.b2, ParamRole::bias});
        list.push_back({p + "ln2.gain", &lp.ln2_gain, ParamRole::norm});
        list.push_back({p + "ln2.bias", &lp.ln2_bias, ParamRole::norm});
    }
    return list;
}

SelfAttention self_attention(const Tensor& k) {
    if (k.rank() != 2 || k.rows() == 0) {
        throw EmptyInputError("self_attention: need a non-empty [L×d_k] matrix");
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(k.cols()));
    Tensor probs = ops::row_softmax(ops::scale(ops::matmul_bt(k, k), inv_sqrt));
    Tensor out = ops::matmul(probs, k);
    return {std::move(out), std::move(probs)};
}

Tensor self_attention_backward(const Tensor& k, const SelfAttention& fwd, const Tensor& dout) {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(k.cols()));
    // out = P·K
    auto g_out = ops::matmul_backward(fwd.probs, k, dout);
    Tensor dk = std::move(g_out.db);
    // P = softmax(S), S = K·Kᵀ/√d: both operands of the product are K.
    Tensor ds = ops::scale(ops::row_softmax_backward(fwd.probs, g_out.da), inv_sqrt);
    auto g_s = ops::matmul_bt_backward(k, k, ds);
    ops::add_into(dk, g_s.da);
    ops::add_into(dk, g_s.db);
    return dk;
}

EncodeCallLog::EncodeCallLog() : previous_(t_call_log) { t_call_log = this; }
EncodeCallLog::~EncodeCallLog() { t_call_log = previous_; }

Tensor encode(std::span<const TokenId> ids, const EncoderParams& params, bool train,
              rnd::Engine* rng, EncoderCache* cache) {
    const EncoderConfig& cfg = params.config;
    const std::size_t len = ids.size();
    const std::size_t d = cfg.d_model;
    if (len == 0) {
        throw EncoderError("encode: empty input");
    }
    if (len > cfg.max_len) {
        throw EncoderError("encode: length " + std::to_string(len) + " exceeds max length " +
                           std::to_string(cfg.max_len));
    }
    if (train && cfg.dropout > 0.0 && rng == nullptr) {
        throw ContractError("encode: training mode needs a random engine");
    }
    if (t_call_log != nullptr) {
        t_call_log->lengths_.push_back(len);
    }

    const std::vector<bool> keep = attended_positions(ids, cfg);

    Tensor x({len, d});
    for (std::size_t i = 0; i < len; ++i) {
        const TokenId id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab) {
            throw EncoderError("encode: token id " + std::to_string(id) + " outside vocab of " +
                               std::to_string(cfg.vocab));
        }
        auto row = x.row(i);
        auto te = params.tok_emb.row(static_cast<std::size_t>(id));
        auto pe = params.pos_emb.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            row[c] = te[c] + pe[c];
        }
    }

    ops::LayerNormCache emb_ln;
    std::vector<double> emb_drop;
    x = ops::layer_norm(x, params.emb_ln_gain, params.emb_ln_bias, cache ? &emb_ln : nullptr);
    x = maybe_dropout(x, cfg.dropout, train, rng, emb_drop);

    if (cache != nullptr) {
        cache->ids.assign(ids.begin(), ids.end());
        cache->emb_ln = std::move(emb_ln);
        cache->emb_drop = std::move(emb_drop);
        cache->layers.clear();
        cache->layers.reserve(params.layers.size());
    }

    const std::size_t dh = cfg.head_dim();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const auto& lp : params.layers) {
        LayerCache lc;
        Tensor q = linear(x, lp.wq, lp.bq);
        Tensor k = linear(x, lp.wk, lp.bk);
        Tensor v = linear(x, lp.wv, lp.bv);
        Tensor ctx({len, d});
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            Tensor qh = slice_cols(q, h * dh, dh);
            Tensor kh = slice_cols(k, h * dh, dh);
            Tensor vh = slice_cols(v, h * dh, dh);
            Tensor scores = ops::scale(ops::matmul_bt(qh, kh), inv_sqrt);
            if (cfg.mask_padding) {
                for (std::size_t r = 0; r < len; ++r) {
                    for (std::size_t c = 0; c < len; ++c) {
                        if (!keep[c]) {
                            scores.at(r, c) = kMaskedScore;
                        }
                    }
                }
            }
            Tensor probs = ops::row_softmax(scores);
            scatter_cols(ctx, ops::matmul(probs, vh), h * dh);
            if (cache != nullptr) {
                lc.probs.push_back(std::move(probs));
            }
        }
        Tensor attn = maybe_dropout(linear(ctx, lp.wo, lp.bo), cfg.dropout, train, rng, lc.attn_drop);
        Tensor y1 = ops::layer_norm(ops::add(x, attn), lp.ln1_gain, lp.ln1_bias, cache ? &lc.ln1 : nullptr);
        Tensor h_pre = linear(y1, lp.w1, lp.b1);
        Tensor h = ops::relu(h_pre);
        Tensor ff = maybe_dropout(linear(h, lp.w2, lp.b2), cfg.dropout, train, rng, lc.ff_drop);
        Tensor y2 = ops::layer_norm(ops::add(y1, ff), lp.ln2_gain, lp.ln2_bias, cache ? &lc.ln2 : nullptr);
        if (cache != nullptr) {
            lc.x_in = std::move(x);
            lc.q = std::move(q);
            lc.k = std::move(k);
            lc.v = std::move(v);
            lc.ctx = std::move(ctx);
            lc.y1 = std::move(y1);
            lc.h_pre = std::move(h_pre);
            lc.h = std::move(h);
            cache->layers.push_back(std::move(lc));
        }
        x = std::move(y2);
    }
    return x;
}

void encode_backward(const EncoderParams& params, const EncoderCache& cache, const Tensor& dout,
                     EncoderParams& grads) {
    const EncoderConfig& cfg = params.config;
    const std::size_t len = cache.ids.size();
    const std::size_t d = cfg.d_model;
    const std::size_t dh = cfg.head_dim();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    if (cache.layers.size() != params.layers.size()) {
        throw ContractError("encode_backward: cache does not match parameters");
    }

    Tensor dx = dout;
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const LayerParams& lp = params.layers[li];
        const LayerCache& lc = cache.layers[li];
        LayerParams& g = grads.layers[li];

        auto ln2 = ops::layer_norm_backward(lc.ln2, lp.ln2_gain, dx);
        ops::add_into(g.ln2_gain, ln2.dgain);
        ops::add_into(g.ln2_bias, ln2.dbias);
        Tensor dff = maybe_dropout_backward(lc.ff_drop, ln2.dx);
        Tensor dh_post = linear_backward(lc.h, lp.w2, dff, g.w2, g.b2);
        Tensor dh_pre = ops::relu_backward(lc.h_pre, dh_post);
        Tensor dy1 = linear_backward(lc.y1, lp.w1, dh_pre, g.w1, g.b1);
        ops::add_into(dy1, ln2.dx);

        auto ln1 = ops::layer_norm_backward(lc.ln1, lp.ln1_gain, dy1);
        ops::add_into(g.ln1_gain, ln1.dgain);
        ops::add_into(g.ln1_bias, ln1.dbias);
        Tensor dattn = maybe_dropout_backward(lc.attn_drop, ln1.dx);
        Tensor dctx = linear_backward(lc.ctx, lp.wo, dattn, g.wo, g.bo);

        Tensor dq({len, d});
        Tensor dk({len, d});
        Tensor dv({len, d});
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            Tensor qh = slice_cols(lc.q, h * dh, dh);
            Tensor kh = slice_cols(lc.k, h * dh, dh);
            Tensor vh = slice_cols(lc.v, h * dh, dh);
            Tensor dctx_h = slice_cols(dctx, h * dh, dh);
            const Tensor& probs = lc.probs[h];
            auto g_pv = ops::matmul_backward(probs, vh, dctx_h);
            Tensor dscores = ops::scale(ops::row_softmax_backward(probs, g_pv.da), inv_sqrt);
            auto g_qk = ops::matmul_bt_backward(qh, kh, dscores);
            scatter_cols(dq, g_qk.da, h * dh);
            scatter_cols(dk, g_qk.db, h * dh);
            scatter_cols(dv, g_pv.db, h * dh);
        }
        Tensor dx_in = ln1.dx;
        ops::add_into(dx_in, linear_backward(lc.x_in, lp.wq, dq, g.wq, g.bq));
        ops::add_into(dx_in, linear_backward(lc.x_in, lp.wk, dk, g.wk, g.bk));
        ops::add_into(dx_in, linear_backward(lc.x_in, lp.wv, dv, g.wv, g.bv));
        dx = std::move(dx_in);
    }

    dx = maybe_dropout_backward(cache.emb_drop, dx);
    auto emb = ops::layer_norm_backward(cache.emb_ln, params.emb_ln_gain, dx);
    ops::add_into(grads.emb_ln_gain, emb.dgain);
    ops::add_into(grads.emb_ln_bias, emb.dbias);
    for (std::size_t i = 0; i < len; ++i) {
        auto src = emb.dx.row(i);
        ops::add_into(grads.tok_emb.row(static_cast<std::size_t>(cache.ids[i])), src);
        ops::add_into(grads.pos_emb.row(i), src);
    }
}

Tensor pool(const Tensor& enc) { return ops::mean_pool(enc); }

std::vector<bool> attended_positions(std::span<const TokenId> ids, const EncoderConfig& config) {
    std::vector<bool> keep(ids.size(), true);
    if (config.mask_padding) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            keep[i] = ids[i] != kPadId;
        }
    }
    return keep;
}

Tensor pool(const Tensor& enc, std::span<const TokenId> ids, const EncoderConfig& config) {
    if (!config.mask_padding) {
        return ops::mean_pool(enc);
    }
    return ops::masked_mean_pool(enc, attended_positions(ids, config));
}

Tensor pool_backward(const Tensor& dpooled, std::span<const TokenId> ids, const EncoderConfig& config) {
    if (!config.mask_padding) {
        return ops::mean_pool_backward(dpooled, ids.size());
    }
    return ops::masked_mean_pool_backward(dpooled, attended_positions(ids, config));
}

AttentionCost attention_cost(const EncoderConfig& config, std::uint64_t length) {
    const std::uint64_t n = config.layers;
    return {n * config.heads * length * length, n * config.d_model * length};
}

}  // namespace skin
