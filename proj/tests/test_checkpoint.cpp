#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "skin/checkpoint.hpp"
#include "support.hpp"

using namespace skin;

namespace {

SkinParams make_skin(std::uint64_t seed) {
    rnd::Engine rng(seed);
    return SkinParams::init(EncoderConfig::lite_desk(20, 10), EncoderConfig::strong_desk(20, 14), 3, rng);
}

bool bits_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("tensors round-trip bit for bit") {
    const auto dir = testing::scratch_dir("ckpt_raw");
    ckpt::Checkpoint k;
    rnd::Engine rng(1);
    Tensor odd = testing::random_tensor({3, 2, 2}, rng, -1e300, 1e300);
    odd[0] = -0.0;
    odd[1] = 5e-324;
    odd[2] = std::nextafter(1.0, 2.0);
    k.put("odd", odd);
    k.put("empty", Tensor());
    k.meta["note"] = "line one\nline two";
    ckpt::save(dir / "a.ckpt", k);
    const auto back = ckpt::load(dir / "a.ckpt");
    CHECK(bits_equal(back.get("odd"), odd));
    CHECK(std::signbit(back.get("odd")[0]));
    CHECK(back.get("empty").size() == 0);
    CHECK(back.meta_at("note") == "line one\nline two");
    CHECK_THROWS_AS(back.get("absent"), ckpt::CheckpointError);
    CHECK_THROWS_AS(back.meta_at("absent"), ckpt::CheckpointError);
    CHECK(!std::filesystem::exists(dir / "a.ckpt.tmp"));
}

TEST_CASE("model parameters round-trip") {
    const auto dir = testing::scratch_dir("ckpt_model");
    auto p = make_skin(2);
    ckpt::Checkpoint k;
    ckpt::put_skin(k, p);
    ckpt::save(dir / "s.ckpt", k);
    const auto loaded = ckpt::load(dir / "s.ckpt");
    CHECK(ckpt::kind_of(loaded) == "skin");
    auto q = ckpt::get_skin(loaded);
    const auto pa = p.params();
    const auto pb = q.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(bits_equal(*pa[i].tensor, *pb[i].tensor));
    }
    CHECK(q.lite.config.d_model == p.lite.config.d_model);
    CHECK(q.strong.config.max_len == p.strong.config.max_len);
    CHECK(q.strong.config.dropout == p.strong.config.dropout);
    CHECK_THROWS_AS(ckpt::get_baseline(loaded, BaselineKind::truncate), ckpt::KindMismatch);
}

TEST_CASE("baseline kind is checked") {
    rnd::Engine rng(3);
    auto b = BaselineParams::init(BaselineKind::head_tail, EncoderConfig::strong_desk(20, 11), 3, 8, 4, rng);
    ckpt::Checkpoint k;
    ckpt::put_baseline(k, b);
    CHECK(ckpt::kind_of(k) == "baseline:headtail");
    const auto back = ckpt::get_baseline(k, BaselineKind::head_tail);
    CHECK(back.half == 4);
    CHECK(back.cap == 8);
    try {
        ckpt::get_baseline(k, BaselineKind::slide_window);
        FAIL("no throw");
    } catch (const ckpt::KindMismatch& e) {
        CHECK(e.found == "baseline:headtail");
        CHECK(e.expected == "baseline:slidewindow");
    }
    CHECK_THROWS_AS(ckpt::get_skin(k), ckpt::KindMismatch);
}

TEST_CASE("vocab, state and keys round-trip") {
    const auto dir = testing::scratch_dir("ckpt_state");
    Vocab v;
    v.add("alpha");
    v.add("beta");
    StageState s;
    s.epochs_done = 2;
    s.best_loss = 0.75;
    s.stale_epochs = 1;
    s.curve = {{1, 0, 1.5, 0.3}, {1, 1, 0.75, 0.6}};
    Tensor w = Tensor::vector({1, 2, 3});
    w.enable_grad();
    w.grad()[0] = 1.0;
    AdamState a;
    adam_step(w, a, {});
    s.adam = {a};
    const auto doc = segment_document(std::vector<TokenId>(32, 7), 4, 8, 0);
    const std::vector<SegmentedDoc> docs = {doc};
    auto key = select_key_segment(Tensor::vector({0.1, 0.2, 0.6, 0.1}), doc);
    const std::vector<KeySegment> keys = {key};

    ckpt::Checkpoint k;
    ckpt::put_vocab(k, v);
    ckpt::put_state(k, "state", s);
    ckpt::put_keys(k, keys);
    ckpt::save(dir / "x.ckpt", k);
    const auto back = ckpt::load(dir / "x.ckpt");
    CHECK(ckpt::get_vocab(back).tokens() == v.tokens());
    CHECK(ckpt::has_state(back, "state"));
    CHECK(!ckpt::has_state(back, "other"));
    const auto t = ckpt::get_state(back, "state");
    CHECK(t.epochs_done == 2);
    CHECK(t.best_loss == 0.75);
    CHECK(t.stale_epochs == 1);
    CHECK(!t.finished);
    REQUIRE(t.curve.size() == 2);
    CHECK(t.curve[1].mean_loss == 0.75);
    REQUIRE(t.adam.size() == 1);
    CHECK(t.adam[0].t == 1);
    CHECK(bits_equal(t.adam[0].m, a.m));
    const auto kb = ckpt::get_keys(back, docs);
    REQUIRE(kb.size() == 1);
    CHECK(kb[0].k == key.k);
    CHECK(kb[0].start == key.start);
    CHECK(kb[0].span == key.span);
    const std::vector<SegmentedDoc> two = {doc, doc};
    CHECK_THROWS_AS(ckpt::get_keys(back, two), ckpt::CheckpointError);
}

TEST_CASE("damaged files are rejected") {
    const auto dir = testing::scratch_dir("ckpt_bad");
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint at all";
    CHECK_THROWS_AS(ckpt::load(dir / "junk.ckpt"), ckpt::CheckpointError);
    CHECK_THROWS_AS(ckpt::load(dir / "missing.ckpt"), IoError);

    ckpt::Checkpoint k;
    k.put("t", Tensor({64}, 1.0));
    ckpt::save(dir / "good.ckpt", k);
    const std::string bytes = testing::read_file(dir / "good.ckpt");
    std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 10);
    CHECK_THROWS_AS(ckpt::load(dir / "cut.ckpt"), ckpt::CheckpointError);
    std::string future = bytes;
    future[8] = 99;
    std::ofstream(dir / "future.ckpt", std::ios::binary) << future;
    CHECK_THROWS_AS(ckpt::load(dir / "future.ckpt"), ckpt::CheckpointError);
}

}
