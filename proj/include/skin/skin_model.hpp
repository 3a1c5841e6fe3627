#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "skin/encoder.hpp"
#include "skin/params.hpp"
#include "skin/textio.hpp"

namespace skin {

/// Skimming output for one document.
struct SkimOutput {
    Tensor p;       // [n×d_g] pooled segment encodings
    Tensor logits;  // [n] self-adaptive attention scores before softmax
    Tensor g;       // [n] segment weights
    Tensor r_g;     // [d_g] global vector
    Tensor o_pre;   // [U] skim-stage class probabilities
};

struct KeySegment {
    std::size_t k = 0;
    std::size_t start = 0;
    std::vector<TokenId> span;  // exactly 1.5·l ids, before [CLS]/[SEP]
};

struct SkinParams {
    EncoderParams lite;
    Tensor w_a;   // [1×d_g]
    Tensor w_op;  // [U×d_g]
    Tensor b_op;  // [U]
    EncoderParams strong;
    Tensor w_o;  // [U×(d_l+d_g)], first d_l columns read r_l
    Tensor b_o;  // [U]

    static SkinParams init(const EncoderConfig& lite, const EncoderConfig& strong, std::size_t classes,
                           rnd::Engine& rng);
    SkinParams zeros_like() const;

    std::size_t d_g() const { return lite.config.d_model; }
    std::size_t d_l() const { return strong.config.d_model; }
    std::size_t classes() const { return b_o.size(); }

    ParamList params();       // everything
    ParamList skim_params();  // lite encoder, W_a, W_op, b_op
};

// Self-adaptive attention pieces, exposed so tests can drive each seam.
// logits_i = W_a·p(i) / √d_g
Tensor saa_logits(const Tensor& p, const Tensor& w_a);
// r_g = g·p
Tensor global_vector(const Tensor& g, const Tensor& p);

struct SkimCache {
    std::vector<std::vector<TokenId>> wrapped;
    std::vector<EncoderCache> segments;
};

/// Lite-encodes every [CLS]/[SEP]-wrapped segment, pools, scores segments,
/// mixes them into r_g and classifies r_g.
SkimOutput skim_forward(const SegmentedDoc& doc, const SkinParams& params, bool train,
                        rnd::Engine* rng, SkimCache* cache);

/// Backward through the skim branch. `d_o_pre` and `d_r_g` may each be null;
/// the latter carries gradient arriving from the intensive branch.
void skim_backward(const SkinParams& params, const SkimCache& cache, const SkimOutput& out,
                   const Tensor* d_o_pre, const Tensor* d_r_g, SkinParams& grads);

/// Half-open token window [start, end) chosen for key index k.
std::pair<std::size_t, std::size_t> key_span_bounds(std::size_t k, std::size_t n, std::size_t l);

/// k = argmax(g) (lowest index on ties), then the 1.5·l window around it.
KeySegment select_key_segment(const Tensor& g, const SegmentedDoc& doc);

struct IntensiveOutput {
    Tensor r_l;  // [d_l]
    Tensor r;    // [d_l+d_g] = [r_l, r_g]
    Tensor o;    // [U]
};

struct IntensiveCache {
    std::vector<TokenId> wrapped;
    EncoderCache encoder;
};

/// Strong-encodes the wrapped key span, pools to r_l, concatenates r_g and
/// classifies. With `ablate_local` the strong encoder is skipped and r_l is 0.
IntensiveOutput intensive_forward(const KeySegment& key, const SkimOutput& skim, const SkinParams& params,
                                  bool train, rnd::Engine* rng, IntensiveCache* cache,
                                  bool ablate_local = false);

/// Returns d(loss)/d(r_g) for the skim branch.
Tensor intensive_backward(const SkinParams& params, const IntensiveCache& cache, const IntensiveOutput& out,
                          const Tensor& d_o, SkinParams& grads, bool ablate_local = false);

}  // namespace skin
