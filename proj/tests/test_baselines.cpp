#include <doctest.h>

#include <cmath>

#include "skin/baselines.hpp"
#include "support.hpp"

using namespace skin;

namespace {

EncoderConfig tiny(std::size_t max_len, std::size_t vocab = 40) {
    EncoderConfig c;
    c.layers = 1;
    c.heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.max_len = max_len;
    c.vocab = vocab;
    c.dropout = 0.1;
    return c;
}

std::vector<TokenId> counting(std::size_t len) {
    std::vector<TokenId> ids(len);
    for (std::size_t i = 0; i < len; ++i) {
        ids[i] = static_cast<TokenId>(4 + i % 36);
    }
    return ids;
}

double sum(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) {
        s += v;
    }
    return s;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("names round-trip") {
    for (auto k : {BaselineKind::truncate, BaselineKind::head_tail, BaselineKind::slide_window}) {
        CHECK(parse_baseline_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_baseline_kind("bert"), ConfigError);
    CHECK(default_cap(8, 128) == 512);
    CHECK(default_half(128) == 128);
    CHECK(baseline_input_length(BaselineKind::truncate, 8, 128, 512, 128) == 514);
    CHECK(baseline_input_length(BaselineKind::head_tail, 8, 128, 512, 128) == 259);
    CHECK(baseline_input_length(BaselineKind::slide_window, 8, 128, 512, 128) == 130);
}

TEST_CASE("truncation feeds exactly cap + 2 ids") {
    rnd::Engine rng(1);
    const auto params = BaselineParams::init(BaselineKind::truncate, tiny(514), 3, 512, 128, rng);
    const auto doc = segment_document(counting(600), 8, 128, 0);
    const auto in = truncate_input(doc, 512);
    CHECK(in == counting(512));
    EncodeCallLog log;
    const Tensor p = truncate_classify(doc, params);
    CHECK(log.lengths() == std::vector<std::size_t>{514});
    CHECK(std::abs(sum(p) - 1.0) < 1e-9);

    const auto small = segment_document(counting(10), 8, 128, 0);
    const auto padded = truncate_input(small, 512);
    CHECK(std::vector<TokenId>(padded.begin(), padded.begin() + 10) == counting(10));
    CHECK(std::all_of(padded.begin() + 10, padded.end(), [](TokenId t) { return t == kPadId; }));
    const Tensor q = truncate_classify(small, params);
    CHECK(std::abs(sum(q) - 1.0) < 1e-9);
    const Tensor again = truncate_classify(small, params);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(q[i] == again[i]);
    }
}

TEST_CASE("head and tail slices") {
    const auto ids = counting(1024);
    const auto doc = segment_document(ids, 8, 128, 0);
    const auto ht = head_tail_input(doc, 128);
    REQUIRE(ht.size() == 257);
    for (std::size_t i = 0; i < 128; ++i) {
        CHECK(ht[i] == ids[i]);
        CHECK(ht[129 + i] == ids[1024 - 128 + i]);
    }
    CHECK(ht[128] == kSepId);

    const auto short_ids = counting(100);
    const auto sdoc = segment_document(short_ids, 8, 128, 0);
    const auto sh = head_tail_input(sdoc, 128);
    REQUIRE(sh.size() == 257);
    for (std::size_t i = 0; i < 128; ++i) {
        CHECK(sh[i] == (i < 100 ? short_ids[i] : kPadId));
        CHECK(sh[129 + i] == (i < 100 ? short_ids[i] : kPadId));
    }

    rnd::Engine rng(2);
    const auto params = BaselineParams::init(BaselineKind::head_tail, tiny(259), 3, 512, 128, rng);
    EncodeCallLog log;
    const Tensor p = head_tail_classify(doc, params);
    CHECK(log.lengths() == std::vector<std::size_t>{259});
    CHECK(std::abs(sum(p) - 1.0) < 1e-9);
}

TEST_CASE("slide window encodes one segment at a time") {
    rnd::Engine rng(3);
    const auto params = BaselineParams::init(BaselineKind::slide_window, tiny(18), 3, 0, 0, rng);
    const auto doc = segment_document(counting(64), 4, 16, 1);
    EncodeCallLog log;
    const Tensor p = slide_window_classify(doc, params);
    CHECK(log.lengths() == std::vector<std::size_t>{18, 18, 18, 18});
    CHECK(std::abs(sum(p) - 1.0) < 1e-9);
}

TEST_CASE("identical windows average to one pooled vector") {
    rnd::Engine rng(4);
    const auto params = BaselineParams::init(BaselineKind::slide_window, tiny(10), 3, 0, 0, rng);
    std::vector<TokenId> ids;
    for (int rep = 0; rep < 3; ++rep) {
        for (TokenId t : {5, 9, 7, 11, 6, 8, 10, 4}) {
            ids.push_back(t);
        }
    }
    const auto doc = segment_document(ids, 3, 8, 0);
    BaselineCache cache;
    baseline_forward(doc, params, false, nullptr, &cache);
    const Tensor single = ops::max_pool(encode(wrap_specials(doc.segment(0)), params.strong, false, nullptr, nullptr)).out;
    for (std::size_t c = 0; c < single.size(); ++c) {
        CHECK(std::abs(cache.feature[c] - single[c]) < 1e-12);
    }
}

TEST_CASE("max pool matches a brute-force column max") {
    rnd::Engine rng(5);
    const Tensor x = testing::random_tensor({6, 4}, rng);
    const auto p = ops::max_pool(x);
    for (std::size_t c = 0; c < 4; ++c) {
        double best = x.at(0, c);
        std::size_t arg = 0;
        for (std::size_t r = 1; r < 6; ++r) {
            if (x.at(r, c) > best) {
                best = x.at(r, c);
                arg = r;
            }
        }
        CHECK(p.out[c] == best);
        CHECK(p.argmax[c] == arg);
    }
}

TEST_CASE("every baseline emits a distribution and rejects the wrong kind") {
    rnd::Engine rng(6);
    const auto doc = segment_document(counting(50), 4, 16, 2);
    for (auto kind : {BaselineKind::truncate, BaselineKind::head_tail, BaselineKind::slide_window}) {
        const auto params = BaselineParams::init(kind, tiny(baseline_input_length(kind, 4, 16, 32, 16)), 3, 32, 16, rng);
        const Tensor p = baseline_classify(doc, params);
        CHECK(p.size() == 3);
        CHECK(std::abs(sum(p) - 1.0) < 1e-9);
    }
    const auto tp = BaselineParams::init(BaselineKind::truncate, tiny(34), 3, 32, 16, rng);
    CHECK_THROWS_AS(head_tail_classify(doc, tp), ConfigError);
    CHECK_THROWS_AS(slide_window_classify(doc, tp), ConfigError);
}

TEST_CASE("baseline training descends and is reproducible") {
    SynthSpec spec;
    spec.n = 2;
    spec.l = 8;
    spec.docs = 40;
    spec.vocab_size = 40;
    spec.signal_pool = 4;
    spec.signal_tokens = 4;
    std::vector<SegmentedDoc> docs;
    for (const auto& d : synth_generate(spec)) {
        docs.push_back(d.doc);
    }
    TrainConfig cfg;
    cfg.lr1 = 1e-3;
    cfg.epochs1 = 3;
    cfg.batch = 8;
    cfg.patience = 100;
    cfg.seed = 2;
    for (auto kind : {BaselineKind::truncate, BaselineKind::head_tail, BaselineKind::slide_window}) {
        const std::size_t vocab = synth_vocab(spec).size();
        const auto cfg_enc = EncoderConfig::strong_desk(vocab, baseline_input_length(kind, 2, 8, 8, 8));
        rnd::Engine r1(9), r2(9);
        auto a = BaselineParams::init(kind, cfg_enc, 3, 8, 8, r1);
        auto b = BaselineParams::init(kind, cfg_enc, 3, 8, 8, r2);
        const auto sa = train_baseline(docs, a, cfg);
        const auto sb = train_baseline(docs, b, cfg);
        CHECK(sa.curve.back().mean_loss < sa.curve.front().mean_loss);
        CHECK(sa.curve.back().mean_loss == sb.curve.back().mean_loss);
        CHECK(sa.curve.front().stage == 0);
    }
}

}
