#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "skin/encoder.hpp"
#include "skin/params.hpp"
#include "skin/textio.hpp"
#include "skin/training.hpp"

namespace skin {

enum class BaselineKind { truncate, head_tail, slide_window };

std::string to_string(BaselineKind kind);
// Accepts "truncate", "headtail" and "slidewindow".
BaselineKind parse_baseline_kind(const std::string& name);

struct BaselineParams {
    BaselineKind kind = BaselineKind::truncate;
    std::size_t cap = 0;   // truncate: tokens kept before wrapping
    std::size_t half = 0;  // head-tail: tokens per side
    EncoderParams strong;
    Tensor w;  // [U×d]
    Tensor b;  // [U]

    static BaselineParams init(BaselineKind kind, const EncoderConfig& strong, std::size_t classes,
                               std::size_t cap, std::size_t half, rnd::Engine& rng);
    BaselineParams zeros_like() const;
    std::size_t classes() const { return b.size(); }
    ParamList params();
};

/// Default truncation cap and head-tail half width for an n×l layout.
std::size_t default_cap(std::size_t n, std::size_t l);
std::size_t default_half(std::size_t l);

/// Longest encoder input (after [CLS]/[SEP]) the baseline will produce.
std::size_t baseline_input_length(BaselineKind kind, std::size_t n, std::size_t l, std::size_t cap,
                                  std::size_t half);

/// First `cap` tokens, [PAD]-extended when the document is shorter.
std::vector<TokenId> truncate_input(const SegmentedDoc& doc, std::size_t cap);
/// head(h) + [SEP] + tail(h); each side padded to h at its end.
std::vector<TokenId> head_tail_input(const SegmentedDoc& doc, std::size_t half);

struct BaselineCache {
    std::vector<std::vector<TokenId>> inputs;  // wrapped encoder inputs
    std::vector<EncoderCache> encoders;
    std::vector<ops::MaxPool> pools;
    Tensor feature;
};

/// Class probabilities. Dropout only when `train` (then `rng` is required).
Tensor baseline_forward(const SegmentedDoc& doc, const BaselineParams& params, bool train, rnd::Engine* rng,
                        BaselineCache* cache);
void baseline_backward(const BaselineParams& params, const BaselineCache& cache, const Tensor& probs,
                       const Tensor& d_probs, BaselineParams& grads);

// Eval-mode classifiers.
Tensor truncate_classify(const SegmentedDoc& doc, const BaselineParams& params);
Tensor head_tail_classify(const SegmentedDoc& doc, const BaselineParams& params);
Tensor slide_window_classify(const SegmentedDoc& doc, const BaselineParams& params);
Tensor baseline_classify(const SegmentedDoc& doc, const BaselineParams& params);

/// Single-stage fine-tuning with lr1 / epochs1 from the config.
StageState train_baseline(std::span<const SegmentedDoc> corpus, BaselineParams& params, const TrainConfig& config,
                          StageState state = {}, const StageHooks& hooks = {});

}  // namespace skin
