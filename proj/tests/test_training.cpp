#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>
#include <omp.h>

#include "skin/gradcheck.hpp"
#include "skin/training.hpp"
#include "support.hpp"

using namespace skin;

namespace {

struct Setup {
    SynthSpec spec;
    std::vector<SegmentedDoc> docs;
    std::vector<std::size_t> keys;
    SkinParams params;
};

Setup setup(std::size_t docs, std::uint64_t seed, std::size_t n = 2, std::size_t l = 8) {
    Setup s;
    s.spec.n = n;
    s.spec.l = l;
    s.spec.docs = docs;
    s.spec.vocab_size = 40;
    s.spec.signal_pool = 4;
    s.spec.signal_tokens = 4;
    s.spec.seed = seed;
    for (const auto& d : synth_generate(s.spec)) {
        s.docs.push_back(d.doc);
        s.keys.push_back(d.key_index);
    }
    const std::size_t vocab = synth_vocab(s.spec).size();
    rnd::Engine rng(seed);
    s.params = SkinParams::init(EncoderConfig::lite_desk(vocab, l + 2),
                                EncoderConfig::strong_desk(vocab, l + l / 2 + 2), 3, rng);
    return s;
}

std::vector<KeySegment> keys_of(const std::vector<Distilled>& d) {
    std::vector<KeySegment> out;
    for (const auto& x : d) {
        out.push_back(x.key);
    }
    return out;
}

bool same_params(SkinParams& a, SkinParams& b) {
    const auto pa = a.params();
    const auto pb = b.params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const auto da = pa[i].tensor->data();
        const auto db = pb[i].tensor->data();
        if (!std::equal(da.begin(), da.end(), db.begin(), db.end())) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("defaults are the published hyperparameters") {
    const TrainConfig c;
    CHECK(c.r_l2 == 1e-5);
    CHECK(c.dropout == 0.3);
    CHECK(c.gamma == 0.2);
    CHECK(c.lr1 == 1e-4);
    CHECK(c.lr2 == 1e-5);
    CHECK(c.beta1 == 0.9);
    CHECK(c.beta2 == 0.99);
    CHECK(c.batch == 32);
}

TEST_CASE("smooth_labels examples") {
    const Tensor a = smooth_labels(0, 3, 0.2);
    CHECK(a[0] == 0.8);
    CHECK(a[1] == 0.2);
    CHECK(a[2] == 0.2);
    const Tensor b = smooth_labels(2, 4, 0.0);
    CHECK(b[2] == 1.0);
    CHECK(b[0] == 0.0);
    const Tensor c = smooth_labels(1, 2, 0.2);
    CHECK(c[0] == 0.2);
    CHECK(c[1] == 0.8);
    CHECK_THROWS_AS(smooth_labels(3, 3, 0.2), ValidationError);
    CHECK_THROWS_AS(smooth_labels(0, 3, 0.5), ConfigError);
    const Tensor d = smooth_labels(1, 5, 0.1, true);
    double s = 0.0;
    for (double v : d.data()) {
        s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-15);
}

TEST_CASE("smoothed targets sum to 1 + (U-2) gamma") {
    for (std::size_t u = 2; u <= 10; ++u) {
        for (double g : {0.0, 0.05, 0.1, 0.2, 0.3, 0.45}) {
            const Tensor t = smooth_labels(0, u, g);
            double s = 0.0;
            for (double v : t.data()) {
                s += v;
            }
            CHECK(std::abs(s - (1.0 + (static_cast<double>(u) - 2.0) * g)) < 1e-14);
        }
    }
}

TEST_CASE("l2_penalty examples") {
    Tensor w = Tensor::vector({3, 4});
    Tensor b = Tensor::vector({100});
    const ParamList list = {{"w", &w, ParamRole::weight}, {"b", &b, ParamRole::bias}};
    CHECK(l2_penalty(list, 1.0, false) == 25.0);
    w.enable_grad();
    b.enable_grad();
    CHECK(l2_penalty(list, 0.0) == 0.0);
    CHECK(w.grad()[0] == 0.0);
    l2_penalty(list, 0.5);
    CHECK(w.grad()[0] == 3.0);
    CHECK(w.grad()[1] == 4.0);
    CHECK(b.grad()[0] == 0.0);

    rnd::Engine rng(2);
    Tensor x = testing::random_tensor({4, 3}, rng);
    const ParamList one = {{"x", &x, ParamRole::weight}};
    Tensor* inputs[] = {&x};
    CHECK(grad_check([&](bool g) { return l2_penalty(one, 0.3, g); }, inputs).max_rel_error < 1e-8);
}

TEST_CASE("plain cross-entropy when smoothing and L2 are off") {
    const Tensor pred = Tensor::vector({0.2, 0.5, 0.3});
    const Tensor target = smooth_labels(1, 3, 0.0);
    CHECK(std::abs(ops::cross_entropy(pred, target) - (-std::log(0.5))) < 1e-12);
}

TEST_CASE("evaluate examples") {
    const std::vector<SegmentedDoc> docs = {segment_document({}, 2, 4, 0), segment_document({}, 2, 4, 1),
                                            segment_document({}, 2, 4, 2)};
    auto oracle = [](const SegmentedDoc& d) {
        Tensor t({3}, 0.0);
        t[static_cast<std::size_t>(d.label)] = 1.0;
        return t;
    };
    const auto perfect = evaluate(oracle, docs, 3);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.macro_f1 == 1.0);

    const auto half = report_from_confusion({{1, 1}, {1, 1}});
    CHECK(half.accuracy == 0.5);
    CHECK(half.macro_f1 == 0.5);

    const auto constant = evaluate([](const SegmentedDoc&) { return Tensor::vector({0.6, 0.3, 0.1}); }, docs, 3);
    CHECK(std::abs(constant.accuracy - 1.0 / 3.0) < 1e-15);
    CHECK(std::abs(constant.macro_f1 - 0.5 / 3.0) < 1e-15);
    CHECK(constant.per_class[1].f1 == 0.0);
    CHECK(constant.per_class[0].precision == doctest::Approx(1.0 / 3.0));

    CHECK_THROWS_AS(evaluate(oracle, std::span<const SegmentedDoc>{}, 3), EmptyInputError);
    CHECK_THROWS_AS(evaluate([](const SegmentedDoc&) { return Tensor::vector({1, 0}); }, docs, 3), DimensionError);
}

TEST_CASE("report invariants on random confusion matrices") {
    rnd::Engine rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t u = 2 + rnd::index(rng, 4);
        std::vector<std::vector<std::size_t>> m(u, std::vector<std::size_t>(u));
        std::size_t total = 0, trace = 0;
        for (std::size_t i = 0; i < u; ++i) {
            for (std::size_t j = 0; j < u; ++j) {
                m[i][j] = rnd::index(rng, 5);
                total += m[i][j];
                trace += i == j ? m[i][j] : 0;
            }
        }
        if (total == 0) {
            continue;
        }
        const auto r = report_from_confusion(m);
        CHECK(r.total == total);
        CHECK(r.accuracy == static_cast<double>(trace) / static_cast<double>(total));
        for (const auto& c : r.per_class) {
            for (double v : {c.precision, c.recall, c.f1}) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
        CHECK(r.macro_f1 >= 0.0);
        CHECK(r.macro_f1 <= 1.0);
    }
}

TEST_CASE("stage 1 descends and is reproducible") {
    auto a = setup(60, 4);
    auto b = setup(60, 4);
    TrainConfig cfg;
    cfg.lr1 = 1e-3;
    cfg.epochs1 = 4;
    cfg.batch = 8;
    cfg.patience = 100;
    cfg.seed = 3;
    const auto sa = train_stage1(a.docs, a.params, cfg);
    const auto sb = train_stage1(b.docs, b.params, cfg);
    REQUIRE(sa.curve.size() == 4);
    CHECK(sa.curve.back().mean_loss < sa.curve.front().mean_loss);
    for (std::size_t e = 0; e < 4; ++e) {
        CHECK(sa.curve[e].mean_loss == sb.curve[e].mean_loss);
        CHECK(sa.curve[e].stage == 1);
    }
    CHECK(same_params(a.params, b.params));
    CHECK(sa.finished);
    CHECK(sa.adam.front().t == static_cast<std::int64_t>(4 * ((60 + 7) / 8)));
}

TEST_CASE("stage 1 only touches the skim parameters") {
    auto s = setup(16, 5);
    const SkinParams before = s.params;
    TrainConfig cfg;
    cfg.lr1 = 1e-3;
    cfg.epochs1 = 1;
    cfg.seed = 1;
    train_stage1(s.docs, s.params, cfg);
    CHECK(std::equal(before.w_o.data().begin(), before.w_o.data().end(), s.params.w_o.data().begin()));
    CHECK(std::equal(before.strong.tok_emb.data().begin(), before.strong.tok_emb.data().end(),
                     s.params.strong.tok_emb.data().begin()));
    CHECK(!std::equal(before.w_a.data().begin(), before.w_a.data().end(), s.params.w_a.data().begin()));
}

TEST_CASE("stage 1 memorizes a small set") {
    auto s = setup(20, 6);
    TrainConfig cfg;
    cfg.lr1 = 1e-3;
    cfg.epochs1 = 200;
    cfg.batch = 4;
    cfg.dropout = 0.0;
    cfg.patience = 1000;
    cfg.seed = 2;
    StageHooks hooks;
    const auto state = train_stage1(s.docs, s.params, cfg, {}, hooks);
    double best = 0.0;
    for (const auto& e : state.curve) {
        best = std::max(best, e.train_acc);
    }
    CHECK(best == 1.0);
}

TEST_CASE("early stopping ends a stage on a plateau") {
    auto s = setup(12, 7);
    TrainConfig cfg;
    cfg.lr1 = 0.0;
    cfg.epochs1 = 50;
    cfg.dropout = 0.0;
    cfg.patience = 2;
    cfg.seed = 1;
    const auto state = train_stage1(s.docs, s.params, cfg);
    CHECK(state.finished);
    CHECK(state.epochs_done == 3);
}

TEST_CASE("interrupted training resumes to the same result") {
    auto a = setup(30, 8);
    auto b = setup(30, 8);
    TrainConfig cfg;
    cfg.lr1 = 1e-3;
    cfg.epochs1 = 5;
    cfg.batch = 8;
    cfg.patience = 100;
    cfg.seed = 4;
    const auto full = train_stage1(a.docs, a.params, cfg);
    StageHooks stop;
    stop.max_epochs_this_run = 2;
    auto part = train_stage1(b.docs, b.params, cfg, {}, stop);
    CHECK(!part.finished);
    CHECK(part.epochs_done == 2);
    part = train_stage1(b.docs, b.params, cfg, part);
    CHECK(part.finished);
    CHECK(part.curve.size() == full.curve.size());
    CHECK(part.curve.back().mean_loss == full.curve.back().mean_loss);
    CHECK(same_params(a.params, b.params));
}

TEST_CASE("a diverging loss aborts with a diagnostic") {
    auto s = setup(8, 9);
    s.params.w_op.fill(std::nan(""));
    TrainConfig cfg;
    cfg.epochs1 = 1;
    CHECK_THROWS_AS(train_stage1(s.docs, s.params, cfg), TrainingDiverged);
}

TEST_CASE("distill keeps one consistent selection per document") {
    auto s = setup(25, 10, 4, 8);
    const auto d = distill_dataset(s.docs, s.params);
    REQUIRE(d.size() == s.docs.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d[i].doc_index == i);
        CHECK(d[i].key.k == argmax(d[i].skim.g));
        CHECK(d[i].key.span.size() == 12);
        CHECK(d[i].label == s.docs[i].label);
    }
    const auto dir = testing::scratch_dir("distill");
    write_selection_jsonl(dir / "selection.jsonl", d);
    std::ifstream in(dir / "selection.jsonl");
    std::string line;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("doc_id").get<std::size_t>() == count);
        CHECK(j.at("k").get<std::size_t>() == d[count].key.k);
        CHECK(j.at("start").get<std::size_t>() == d[count].key.start);
        CHECK(j.at("g").size() == 4);
        ++count;
    }
    CHECK(count == d.size());
}

TEST_CASE("stage 3 sends gradient into both branches") {
    auto s = setup(4, 11, 4, 8);
    const auto keys = keys_of(distill_dataset(s.docs, s.params));
    auto grads = s.params.zeros_like();
    const auto& doc = s.docs[0];
    SkimCache sc;
    IntensiveCache ic;
    const auto skim = skim_forward(doc, s.params, false, nullptr, &sc);
    const auto out = intensive_forward(keys[0], skim, s.params, false, nullptr, &ic);
    const Tensor d_o = ops::cross_entropy_backward(out.o, smooth_labels(doc.label, 3, 0.2));
    const Tensor d_rg = intensive_backward(s.params, ic, out, d_o, grads);
    skim_backward(s.params, sc, skim, nullptr, &d_rg, grads);
    CHECK(ops::sum_squares(grads.w_a) > 0.0);
    CHECK(ops::sum_squares(grads.w_o) > 0.0);
    CHECK(ops::sum_squares(grads.strong.tok_emb) > 0.0);
    CHECK(ops::sum_squares(grads.lite.tok_emb) > 0.0);
    CHECK(ops::sum_squares(grads.w_op) == 0.0);
}

TEST_CASE("stage 3 descends, is reproducible and checks its inputs") {
    auto a = setup(40, 12, 4, 8);
    auto b = setup(40, 12, 4, 8);
    const auto keys = keys_of(distill_dataset(a.docs, a.params));
    TrainConfig cfg;
    cfg.lr2 = 1e-3;
    cfg.epochs3 = 3;
    cfg.batch = 8;
    cfg.patience = 100;
    cfg.seed = 5;
    const auto sa = train_stage3(a.docs, keys, a.params, cfg);
    const auto sb = train_stage3(b.docs, keys, b.params, cfg);
    CHECK(sa.curve.back().mean_loss < sa.curve.front().mean_loss);
    CHECK(sa.curve.front().stage == 3);
    CHECK(same_params(a.params, b.params));
    const std::vector<KeySegment> short_keys(keys.begin(), keys.begin() + 3);
    CHECK_THROWS(train_stage3(a.docs, short_keys, a.params, cfg));
}

TEST_CASE("parallel and serial training agree bit for bit") {
    auto a = setup(24, 13);
    auto b = setup(24, 13);
    TrainConfig cfg;
    cfg.lr1 = 1e-3;
    cfg.epochs1 = 2;
    cfg.batch = 6;
    cfg.seed = 6;
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    train_stage1(a.docs, a.params, cfg);
    omp_set_num_threads(4);
    train_stage1(b.docs, b.params, cfg);
    omp_set_num_threads(saved);
    CHECK(same_params(a.params, b.params));
}

}
