#include "skin/baselines.hpp"

#include <algorithm>

#include "train_loop.hpp"

namespace skin {

std::string to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::truncate:
            return "truncate";
        case BaselineKind::head_tail:
            return "headtail";
        case BaselineKind::slide_window:
            return "slidewindow";
    }
    throw ContractError("unknown baseline kind");
}

BaselineKind parse_baseline_kind(const std::string& name) {
    if (name == "truncate") {
        return BaselineKind::truncate;
    }
    if (name == "headtail") {
        return BaselineKind::head_tail;
    }
    if (name == "slidewindow") {
        return BaselineKind::slide_window;
    }
    throw ConfigError("unknown baseline '" + name + "' (expected truncate, headtail or slidewindow)");
}

std::size_t default_cap(std::size_t n, std::size_t l) { return n * l / 2; }
std::size_t default_half(std::size_t l) { return l; }

std::size_t baseline_input_length(BaselineKind kind, std::size_t n, std::size_t l, std::size_t cap,
                                  std::size_t half) {
    (void)n;
    switch (kind) {
        case BaselineKind::truncate:
            return cap + 2;
        case BaselineKind::head_tail:
            return 2 * half + 3;
        case BaselineKind::slide_window:
            return l + 2;
    }
    throw ContractError("unknown baseline kind");
}

BaselineParams BaselineParams::init(BaselineKind kind, const EncoderConfig& strong, std::size_t classes,
                                    std::size_t cap, std::size_t half, rnd::Engine& rng) {
    if (classes < 2) {
        throw ConfigError("model needs at least 2 classes");
    }
    if (kind == BaselineKind::truncate && cap == 0) {
        throw ConfigError("truncation cap must be positive");
    }
    if (kind == BaselineKind::head_tail && half == 0) {
        throw ConfigError("head-tail width must be positive");
    }
    BaselineParams p;
    p.kind = kind;
    p.cap = cap;
    p.half = half;
    p.strong = EncoderParams::init(strong, rng);
    p.w = Tensor({classes, strong.d_model});
    for (auto& v : p.w.data()) {
        v = rnd::normal(rng, 0.0, 0.02);
    }
    p.b = Tensor({classes});
    return p;
}

BaselineParams BaselineParams::zeros_like() const {
    BaselineParams z;
    z.kind = kind;
    z.cap = cap;
    z.half = half;
    z.strong = strong.zeros_like();
    z.w = Tensor(w.shape());
    z.b = Tensor(b.shape());
    return z;
}

ParamList BaselineParams::params() {
    ParamList list = strong.params("strong.");
    list.push_back({"w", &w, ParamRole::weight});
    list.push_back({"b", &b, ParamRole::bias});
    return list;
}

std::vector<TokenId> truncate_input(const SegmentedDoc& doc, std::size_t cap) {
    std::vector<TokenId> out(cap, kPadId);
    const std::size_t keep = std::min(cap, doc.tokens.size());
    std::copy_n(doc.tokens.begin(), keep, out.begin());
    return out;
}

std::vector<TokenId> head_tail_input(const SegmentedDoc& doc, std::size_t half) {
    const std::size_t content = doc.content_length();
    std::vector<TokenId> out(2 * half + 1, kPadId);
    const std::size_t head = std::min(half, content);
    std::copy_n(doc.tokens.begin(), head, out.begin());
    out[half] = kSepId;
    const std::size_t tail = std::min(half, content);
    std::copy_n(doc.tokens.begin() + static_cast<std::ptrdiff_t>(content - tail), tail,
                out.begin() + static_cast<std::ptrdiff_t>(half + 1));
    return out;
}

namespace {

std::vector<std::vector<TokenId>> encoder_inputs(const SegmentedDoc& doc, const BaselineParams& params) {
    std::vector<std::vector<TokenId>> inputs;
    switch (params.kind) {
        case BaselineKind::truncate:
            inputs.push_back(wrap_specials(truncate_input(doc, params.cap)));
            break;
        case BaselineKind::head_tail:
            inputs.push_back(wrap_specials(head_tail_input(doc, params.half)));
            break;
        case BaselineKind::slide_window:
            validate_segmentation(doc.n, doc.l);
            for (std::size_t i = 0; i < doc.n; ++i) {
                inputs.push_back(wrap_specials(doc.segment(i)));
            }
            break;
    }
    return inputs;
}

}  // namespace

Tensor baseline_forward(const SegmentedDoc& doc, const BaselineParams& params, bool train, rnd::Engine* rng,
                        BaselineCache* cache) {
    BaselineCache local;
    BaselineCache& c = cache ? *cache : local;
    c.inputs = encoder_inputs(doc, params);
    c.encoders.assign(c.inputs.size(), {});
    c.pools.clear();
    const auto& cfg = params.strong.config;
    if (params.kind == BaselineKind::slide_window) {
        c.feature = Tensor({cfg.d_model});
        for (std::size_t i = 0; i < c.inputs.size(); ++i) {
            Tensor enc = encode(c.inputs[i], params.strong, train, rng, cache ? &c.encoders[i] : nullptr);
            c.pools.push_back(ops::max_pool(enc));
            ops::add_into(c.feature, c.pools.back().out);
        }
        c.feature = ops::scale(c.feature, 1.0 / static_cast<double>(c.inputs.size()));
    } else {
        Tensor enc = encode(c.inputs[0], params.strong, train, rng, cache ? &c.encoders[0] : nullptr);
        c.feature = pool(enc, c.inputs[0], cfg);
    }
    return ops::row_softmax(ops::add(ops::matvec(params.w, c.feature), params.b));
}

void baseline_backward(const BaselineParams& params, const BaselineCache& cache, const Tensor& probs,
                       const Tensor& d_probs, BaselineParams& grads) {
    Tensor dz = ops::row_softmax_backward(probs, d_probs);
    auto mv = ops::matvec_backward(params.w, cache.feature, dz);
    ops::add_into(grads.w, mv.dw);
    ops::add_into(grads.b, dz);
    const auto& cfg = params.strong.config;
    if (params.kind == BaselineKind::slide_window) {
        Tensor dpool = ops::scale(mv.dx, 1.0 / static_cast<double>(cache.inputs.size()));
        for (std::size_t i = 0; i < cache.inputs.size(); ++i) {
            Tensor denc = ops::max_pool_backward(cache.pools[i], dpool, cache.inputs[i].size());
            encode_backward(params.strong, cache.encoders[i], denc, grads.strong);
        }
    } else {
        Tensor denc = pool_backward(mv.dx, cache.inputs[0], cfg);
        encode_backward(params.strong, cache.encoders[0], denc, grads.strong);
    }
}

namespace {
Tensor classify_as(BaselineKind kind, const SegmentedDoc& doc, const BaselineParams& params) {
    if (params.kind != kind) {
        throw ConfigError("parameters belong to the " + to_string(params.kind) + " baseline, not " +
                          to_string(kind));
    }
    return baseline_forward(doc, params, false, nullptr, nullptr);
}
}  // namespace

Tensor truncate_classify(const SegmentedDoc& doc, const BaselineParams& params) {
    return classify_as(BaselineKind::truncate, doc, params);
}

Tensor head_tail_classify(const SegmentedDoc& doc, const BaselineParams& params) {
    return classify_as(BaselineKind::head_tail, doc, params);
}

Tensor slide_window_classify(const SegmentedDoc& doc, const BaselineParams& params) {
    return classify_as(BaselineKind::slide_window, doc, params);
}

Tensor baseline_classify(const SegmentedDoc& doc, const BaselineParams& params) {
    return baseline_forward(doc, params, false, nullptr, nullptr);
}

StageState train_baseline(std::span<const SegmentedDoc> corpus, BaselineParams& params, const TrainConfig& config,
                          StageState state, const StageHooks& hooks) {
    const std::size_t classes = params.classes();
    for (const auto& doc : corpus) {
        if (doc.label < 0 || static_cast<std::size_t>(doc.label) >= classes) {
            throw ValidationError("document label " + std::to_string(doc.label) + " outside [0, " +
                                  std::to_string(classes) + ")");
        }
    }
    params.strong.config.dropout = config.dropout;
    auto sample = [&](std::size_t d, rnd::Engine& rng, BaselineParams& grads) {
        const SegmentedDoc& doc = corpus[d];
        BaselineCache cache;
        Tensor probs = baseline_forward(doc, params, true, &rng, &cache);
        Tensor target = smooth_labels(doc.label, classes, config.gamma, config.normalize_smoothing);
        detail::SampleOutcome res;
        res.loss = ops::cross_entropy(probs, target);
        res.correct = argmax(probs) == static_cast<std::size_t>(doc.label);
        baseline_backward(params, cache, probs, ops::cross_entropy_backward(probs, target), grads);
        return res;
    };
    auto subset = [](BaselineParams& m) { return m.params(); };
    return detail::run_stage(0, corpus.size(), params, subset, sample, config, config.lr1, config.epochs1,
                             std::move(state), hooks);
}

}  // namespace skin
