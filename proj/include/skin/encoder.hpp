#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "skin/ops.hpp"
#include "skin/params.hpp"
#include "skin/random.hpp"
#include "skin/tensor.hpp"
#include "skin/textio.hpp"

namespace skin {

struct EncoderConfig {
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t d_model = 32;
    std::size_t d_ff = 64;
    std::size_t max_len = 64;
    std::size_t vocab = 0;
    double dropout = 0.3;
    // Exclude [PAD] positions from attention keys and from pooling.
    bool mask_padding = false;

    std::size_t head_dim() const { return d_model / heads; }
    void validate() const;

    // Desk-scale stand-ins; lite is far cheaper than strong.
    static EncoderConfig lite_desk(std::size_t vocab, std::size_t max_len);
    static EncoderConfig strong_desk(std::size_t vocab, std::size_t max_len);
    // Published BERT-Tiny / BERT-Base shapes (used for cost modeling).
    static EncoderConfig lite_paper(std::size_t vocab, std::size_t max_len);
    static EncoderConfig strong_paper(std::size_t vocab, std::size_t max_len);
};

struct LayerParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_gain, ln1_bias;
    Tensor w1, b1, w2, b2;
    Tensor ln2_gain, ln2_bias;
};

struct EncoderParams {
    EncoderConfig config;
    Tensor tok_emb;  // [vocab×d]
    Tensor pos_emb;  // [max_len×d]
    Tensor emb_ln_gain, emb_ln_bias;
    std::vector<LayerParams> layers;

    // Weights ~ Normal(0, 0.02); biases 0; layer-norm gain 1, bias 0.
    static EncoderParams init(const EncoderConfig& config, rnd::Engine& rng);
    // Same shapes, all values zero. Used as a gradient accumulator.
    EncoderParams zeros_like() const;
    ParamList params(const std::string& prefix);
};

/// Single-matrix attention softmax(K·Kᵀ/√d_k)·K, kept as a
/// standalone primitive (the blocks use separate Q/K/V projections).
struct SelfAttention {
    Tensor out;
    Tensor probs;
};
SelfAttention self_attention(const Tensor& k);
Tensor self_attention_backward(const Tensor& k, const SelfAttention& fwd, const Tensor& dout);

struct LayerCache {
    Tensor x_in;
    Tensor q, k, v;
    std::vector<Tensor> probs;  // one [L×L] per head
    Tensor ctx;
    std::vector<double> attn_drop;
    ops::LayerNormCache ln1;
    Tensor y1;
    Tensor h_pre;
    Tensor h;
    std::vector<double> ff_drop;
    ops::LayerNormCache ln2;
};

struct EncoderCache {
    std::vector<TokenId> ids;
    ops::LayerNormCache emb_ln;
    std::vector<double> emb_drop;
    std::vector<LayerCache> layers;
};

struct EncoderError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Token + position embedding, then post-norm blocks of multi-head attention
/// and a ReLU feed-forward. Dropout is active only when `train` is set, in
/// which case `rng` must be non-null. Pass `cache` to enable backward.
Tensor encode(std::span<const TokenId> ids, const EncoderParams& params, bool train,
              rnd::Engine* rng, EncoderCache* cache);

/// Accumulates parameter gradients into `grads` (values, not grad buffers).
void encode_backward(const EncoderParams& params, const EncoderCache& cache, const Tensor& dout,
                     EncoderParams& grads);

// Positions that take part in attention and pooling: all of them unless the
// config masks [PAD].
std::vector<bool> attended_positions(std::span<const TokenId> ids, const EncoderConfig& config);

/// Mean over positions, skipping masked [PAD] positions when the config asks.
Tensor pool(const Tensor& enc, std::span<const TokenId> ids, const EncoderConfig& config);
Tensor pool_backward(const Tensor& dpooled, std::span<const TokenId> ids, const EncoderConfig& config);
// Unmasked mean pool.
Tensor pool(const Tensor& enc);

struct AttentionCost {
    std::uint64_t quadratic = 0;  // N·h·L² attention-score elements
    std::uint64_t linear = 0;     // N·d·L activation elements
};
AttentionCost attention_cost(const EncoderConfig& config, std::uint64_t length);

/// Records the sequence length of every encode() call made on this thread
/// while alive.
class EncodeCallLog {
public:
    EncodeCallLog();
    ~EncodeCallLog();
    EncodeCallLog(const EncodeCallLog&) = delete;
    EncodeCallLog& operator=(const EncodeCallLog&) = delete;
    const std::vector<std::size_t>& lengths() const { return lengths_; }

private:
    friend Tensor encode(std::span<const TokenId>, const EncoderParams&, bool, rnd::Engine*,
                         EncoderCache*);
    std::vector<std::size_t> lengths_;
    EncodeCallLog* previous_;
};

}  // namespace skin
