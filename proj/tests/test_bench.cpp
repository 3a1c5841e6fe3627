#include <doctest.h>

#include <cmath>
#include <fstream>

#include "skin/bench.hpp"
#include "support.hpp"

using namespace skin;
using namespace skin::bench;

namespace {

double sse(const QuadFit& f, const std::vector<Point>& pts) {
    double s = 0.0;
    for (const auto& p : pts) {
        const double r = p.y - f(p.x);
        s += r * r;
    }
    return s;
}

// Brute-force least squares: scan c2 over a grid, and for each candidate fit
// the line through y - c2·x² in closed form.
QuadFit grid_oracle(const std::vector<Point>& pts, double lo, double hi, std::size_t steps) {
    QuadFit best;
    double best_sse = std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(pts.size());
    for (std::size_t i = 0; i <= steps; ++i) {
        const double c2 = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps);
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto& p : pts) {
            const double y = p.y - c2 * p.x * p.x;
            sx += p.x;
            sy += y;
            sxx += p.x * p.x;
            sxy += p.x * y;
        }
        const double c1 = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        const double c0 = (sy - c1 * sx) / n;
        const QuadFit f{c0, c1, c2, 0.0};
        const double s = sse(f, pts);
        if (s < best_sse) {
            best_sse = s;
            best = f;
        }
    }
    return best;
}

std::vector<Point> sample(const std::vector<double>& xs, double c0, double c1, double c2) {
    std::vector<Point> pts;
    for (double x : xs) {
        pts.push_back({x, c0 + c1 * x + c2 * x * x});
    }
    return pts;
}

const std::vector<double> kLengths = {128, 256, 512, 1024, 2048};

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("method names round-trip") {
    for (auto m : all_methods()) {
        CHECK(parse_method(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_method("longformer"), ConfigError);
}

TEST_CASE("layouts per mode") {
    BenchConfig c;
    c.segment_len = 128;
    c.segments = 8;
    CHECK(layout_for(Method::skin_variable, 1024, c).n == 8);
    CHECK(layout_for(Method::skin_variable, 2048, c).n == 16);
    CHECK(layout_for(Method::skin_invariable, 2048, c).l == 256);
    CHECK(strong_input_length(Method::skin_variable, 2048, c) == 192);
    CHECK(strong_input_length(Method::bert, 2048, c) == 2048);
    CHECK(strong_input_length(Method::slide_window, 2048, c) == 256);
    try {
        layout_for(Method::skin_variable, 1000, c);
        FAIL("no throw");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("valid lengths") != std::string::npos);
    }
    CHECK_THROWS_AS(layout_for(Method::skin_variable, 128, c), ConfigError);
    CHECK_THROWS_AS(layout_for(Method::skin_invariable, 100, c), ConfigError);
}

TEST_CASE("modeled costs scale by mode") {
    BenchConfig c;
    c.paper_dims = true;
    c.segment_len = 128;
    c.segments = 8;
    const auto b1 = modeled_cost(Method::bert, 1024, c).total();
    const auto b2 = modeled_cost(Method::bert, 2048, c).total();
    CHECK(b2 == 4 * b1);
    CHECK(b1 == 12u * 12u * 1024u * 1024u);
    for (std::size_t len : {256u, 512u, 1024u}) {
        const auto v1 = modeled_cost(Method::skin_variable, len, c);
        const auto v2 = modeled_cost(Method::skin_variable, 2 * len, c);
        CHECK(v2.skim == 2 * v1.skim);
        CHECK(v2.key == v1.key);
        CHECK(modeled_cost(Method::bert, 2 * len, c).total() == 4 * modeled_cost(Method::bert, len, c).total());
        const auto i1 = modeled_cost(Method::skin_invariable, len, c);
        const auto i2 = modeled_cost(Method::skin_invariable, 2 * len, c);
        CHECK(i2.skim == 4 * i1.skim);
        CHECK(i2.key == 4 * i1.key);
    }
    const auto v = modeled_cost(Method::skin_variable, 2048, c);
    CHECK(v.skim == 16u * 2u * 2u * 128u * 128u);
    CHECK(v.key == 12u * 12u * 192u * 192u);
}

TEST_CASE("quad_fit examples") {
    const auto sq = quad_fit(sample(kLengths, 0, 0, 1));
    CHECK(std::abs(sq.c0) < 1e-9);
    CHECK(std::abs(sq.c1) < 1e-9);
    CHECK(std::abs(sq.c2 - 1.0) < 1e-9);
    const auto lin = quad_fit(sample(kLengths, 3, 2, 0));
    CHECK(std::abs(lin.c2) < 1e-9);
    CHECK(std::abs(lin.c1 - 2.0) < 1e-9);
    CHECK(std::abs(lin.c0 - 3.0) < 1e-9);
    const auto three = quad_fit(sample({1, 2, 5}, -4, 0.5, 7));
    CHECK(std::abs(three.c0 + 4) < 1e-9);
    CHECK(std::abs(three.c2 - 7) < 1e-9);
    CHECK(three.residual < 1e-9);
}

TEST_CASE("quad_fit rejects rank-deficient input") {
    CHECK_THROWS_AS(quad_fit(sample({1, 2}, 0, 0, 1)), SingularFitError);
    CHECK_THROWS_AS(quad_fit(sample({1, 1, 2, 2}, 0, 0, 1)), SingularFitError);
}

TEST_CASE("quad_fit on noisy data matches a grid-search oracle") {
    rnd::Engine rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const double c2 = 0.5 + rnd::uniform01(rng);
        auto pts = sample(kLengths, 100.0 * rnd::uniform01(rng), 10.0 * rnd::uniform01(rng), c2);
        for (auto& p : pts) {
            p.y += rnd::normal(rng, 0.0, 2000.0);
        }
        const auto fit = quad_fit(pts);
        const double step = 1e-5;
        const auto oracle = grid_oracle(pts, c2 - 0.05, c2 + 0.05, 10000);
        CHECK(sse(fit, pts) <= sse(oracle, pts) * (1.0 + 1e-9));
        CHECK(std::abs(fit.c2 - oracle.c2) <= 2 * step);
        CHECK(std::abs(fit.residual - std::sqrt(sse(fit, pts))) <= 1e-6 * (1.0 + fit.residual));
    }
}

TEST_CASE("quad_fit extrapolations are a fixed point") {
    rnd::Engine rng(3);
    auto pts = sample(kLengths, 50, 3, 0.7);
    for (auto& p : pts) {
        p.y += rnd::normal(rng, 0.0, 500.0);
    }
    const auto fit = quad_fit(pts);
    std::vector<Point> predicted;
    for (double x : {4096.0, 8192.0, 16384.0, 32768.0}) {
        predicted.push_back({x, fit(x)});
    }
    const auto refit = quad_fit(predicted);
    CHECK(std::abs(refit.c0 - fit.c0) <= 1e-9 * std::max(1.0, std::abs(fit.c0)));
    CHECK(std::abs(refit.c1 - fit.c1) <= 1e-9 * std::max(1.0, std::abs(fit.c1)));
    CHECK(std::abs(refit.c2 - fit.c2) <= 1e-9 * std::max(1.0, std::abs(fit.c2)));
}

TEST_CASE("scaling_exponent examples") {
    CHECK(std::abs(scaling_exponent(sample(kLengths, 0, 0, 5)) - 2.0) < 1e-9);
    CHECK(std::abs(scaling_exponent(sample(kLengths, 0, 7, 0)) - 1.0) < 1e-9);
    const double mixed = scaling_exponent(sample(kLengths, 0, 1, 0.001));
    CHECK(mixed > 1.0);
    CHECK(mixed < 2.0);
    CHECK_THROWS_AS(scaling_exponent(sample({1, 2, 3, 4}, -10, 0, 0)), DomainError);
    CHECK_THROWS_AS(scaling_exponent(sample({1, 2, 3}, 0, 1, 0)), ConfigError);
    CHECK_THROWS_AS(scaling_exponent(sample({1, 3, 2, 4}, 0, 1, 0)), ConfigError);
}

TEST_CASE("savings examples") {
    const double skin = 16.0 * 128 * 128 + 192.0 * 192;
    const double bert = 2048.0 * 2048;
    CHECK(std::abs(skin / bert - 0.0713) < 1e-4);
    CHECK(savings_percent(skin, bert) > 92.8);
    CHECK(savings_percent(5.0, 5.0) == 0.0);
    CHECK(std::abs(savings_percent(1.0, 10.0) - 90.0) < 1e-12);

    const std::vector<SeriesPoint> s = {{128, 1, false}, {256, 2, false}, {512, 4, false}};
    const std::vector<SeriesPoint> b = {{128, 10, false}, {256, 40, false}, {512, 160, false}, {1024, 640, false}};
    const auto r = savings_report(s, b, 1024);
    CHECK(r.skin_extrapolated);
    CHECK(!r.bert_extrapolated);
    CHECK(std::abs(r.skin - 8.0) < 1e-9);
    CHECK(std::abs(r.percent - 100.0 * (1.0 - 8.0 / 640.0)) < 1e-9);
    const std::vector<SeriesPoint> two = {{128, 1, false}, {256, 2, false}};
    CHECK_THROWS_AS(savings_report(two, b, 1024), ConfigError);
}

TEST_CASE("median") {
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 2, 3}) == 2.5);
    CHECK_THROWS_AS(median({}), EmptyInputError);
}

TEST_CASE("a small sweep emits every row and fits") {
    BenchConfig c;
    c.lengths = {64, 128, 256, 512};
    c.trials = 2;
    c.warmup = 0;
    c.batch = 1;
    c.segments = 4;
    c.segment_len = 16;
    c.max_measured_length = 256;
    const auto samples = run_cost_sweep(c);
    CHECK(samples.size() == c.methods.size() * c.lengths.size() * c.trials);
    for (const auto& s : samples) {
        CHECK(s.length > 0);
        CHECK(s.wall_time_s > 0.0);
        CHECK(s.peak_elems > 0);
        if (!s.extrapolated) {
            const auto linear = attention_cost(EncoderConfig::strong_desk(4, 1), strong_input_length(s.method, s.length, c)).linear;
            CHECK(s.peak_elems >= linear);
        }
    }
    const auto result = summarize(c, samples);
    double bert = 0.0, variable = 0.0;
    for (const auto& m : result.methods) {
        if (m.method == Method::bert) {
            bert = m.modeled_exponent;
            for (const auto& p : m.points) {
                CHECK(p.extrapolated == (p.length > 256));
            }
        }
        if (m.method == Method::skin_variable) {
            variable = m.modeled_exponent;
        }
    }
    CHECK(variable < bert);
    REQUIRE(result.savings);

    const auto dir = testing::scratch_dir("bench");
    write_csv(dir / "bench.csv", result.samples);
    write_summary_json(dir / "bench_summary.json", result);
    write_dat(dir / "bench.dat", result);
    std::ifstream in(dir / "bench.csv");
    std::string line;
    std::size_t rows = 0;
    std::getline(in, line);
    CHECK(line == "method,L,trial,wall_time_s,modeled_elems,peak_elems");
    while (std::getline(in, line)) {
        ++rows;
    }
    CHECK(rows == samples.size());
}

TEST_CASE("sweep configuration errors") {
    BenchConfig c;
    c.lengths = {256, 128};
    CHECK_THROWS_AS(run_cost_sweep(c), ConfigError);
    c.lengths = {100};
    CHECK_THROWS_AS(run_cost_sweep(c), ConfigError);
}

}
