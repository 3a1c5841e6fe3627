#include "skin/bench.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "skin/baselines.hpp"
#include "skin/kernels.hpp"
#include "skin/skin_model.hpp"
#include "skin/training.hpp"

namespace skin::bench {

std::string to_string(Method m) {
    switch (m) {
        case Method::bert:
            return "bert";
        case Method::slide_window:
            return "slidewindow";
        case Method::skin_invariable:
            return "skin-invariable";
        case Method::skin_variable:
            return "skin-variable";
    }
    throw ContractError("unknown bench method");
}

Method parse_method(const std::string& name) {
    for (Method m : all_methods()) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw ConfigError("unknown bench method '" + name +
                      "' (expected bert, slidewindow, skin-invariable or skin-variable)");
}

std::vector<Method> all_methods() {
    return {Method::bert, Method::slide_window, Method::skin_invariable, Method::skin_variable};
}

namespace {

std::string join_lengths(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t x : v) {
        s += (s.empty() ? "" : ", ") + std::to_string(x);
    }
    return s;
}

// Up to six valid lengths from the rule, for error messages.
std::string valid_examples(Method m, const BenchConfig& c) {
    std::vector<std::size_t> out;
    if (m == Method::skin_variable) {
        for (std::size_t k = 2; out.size() < 6; k *= 2) {
            out.push_back(k * c.segment_len);
        }
    } else {
        for (std::size_t k = 1; out.size() < 6; k *= 2) {
            out.push_back(c.segments * 4 * k);
        }
    }
    return join_lengths(out) + ", ...";
}

}  // namespace

Layout layout_for(Method m, std::size_t length, const BenchConfig& config) {
    Layout out;
    if (m == Method::skin_variable) {
        const std::size_t l = config.segment_len;
        if (l == 0 || length % l != 0 || length / l < 2) {
            throw ConfigError("skin-variable with l=" + std::to_string(l) + " cannot take L=" +
                              std::to_string(length) + "; valid lengths: " + valid_examples(m, config));
        }
        out = {length / l, l};
    } else {
        const std::size_t n = config.segments;
        if (n < 2 || length % n != 0 || (length / n) % 4 != 0 || length / n < 4) {
            throw ConfigError(to_string(m) + " with n=" + std::to_string(n) + " cannot take L=" +
                              std::to_string(length) + "; valid lengths: " + valid_examples(m, config));
        }
        out = {n, length / n};
    }
    validate_segmentation(out.n, out.l);
    return out;
}

std::size_t strong_input_length(Method m, std::size_t length, const BenchConfig& config) {
    const Layout lay = layout_for(m, length, config);
    switch (m) {
        case Method::bert:
            return length;
        case Method::slide_window:
            return lay.l;
        case Method::skin_invariable:
        case Method::skin_variable:
            return lay.l + lay.l / 2;
    }
    throw ContractError("unknown bench method");
}

namespace {

EncoderConfig lite_config(const BenchConfig& c, std::size_t vocab, std::size_t max_len) {
    return c.paper_dims ? EncoderConfig::lite_paper(vocab, max_len) : EncoderConfig::lite_desk(vocab, max_len);
}

EncoderConfig strong_config(const BenchConfig& c, std::size_t vocab, std::size_t max_len) {
    return c.paper_dims ? EncoderConfig::strong_paper(vocab, max_len)
                        : EncoderConfig::strong_desk(vocab, max_len);
}

}  // namespace

ModeledCost modeled_cost(Method m, std::size_t length, const BenchConfig& config) {
    const Layout lay = layout_for(m, length, config);
    const EncoderConfig lite = lite_config(config, 4, 1);
    const EncoderConfig strong = strong_config(config, 4, 1);
    ModeledCost cost;
    switch (m) {
        case Method::bert:
            cost.key = attention_cost(strong, length).quadratic;
            break;
        case Method::slide_window:
            cost.key = lay.n * attention_cost(strong, lay.l).quadratic;
            break;
        case Method::skin_invariable:
        case Method::skin_variable:
            cost.skim = lay.n * attention_cost(lite, lay.l).quadratic;
            cost.key = attention_cost(strong, lay.l + lay.l / 2).quadratic;
            break;
    }
    return cost;
}

QuadFit quad_fit(std::span<const Point> points) {
    if (points.size() < 3) {
        throw SingularFitError("quadratic fit needs at least 3 points, got " + std::to_string(points.size()));
    }
    std::set<double> distinct;
    for (const auto& p : points) {
        distinct.insert(p.x);
    }
    if (distinct.size() < 3) {
        throw SingularFitError("quadratic fit is singular: only " + std::to_string(distinct.size()) +
                               " distinct x values");
    }
    // Centered and scaled basis keeps the normal equations well conditioned.
    long double mean = 0.0L;
    for (const auto& p : points) {
        mean += p.x;
    }
    mean /= static_cast<long double>(points.size());
    long double scale = 0.0L;
    for (const auto& p : points) {
        scale = std::max(scale, std::fabs(static_cast<long double>(p.x) - mean));
    }
    long double s[5] = {0, 0, 0, 0, 0};
    long double t[3] = {0, 0, 0};
    for (const auto& p : points) {
        const long double u = (static_cast<long double>(p.x) - mean) / scale;
        long double pw = 1.0L;
        for (int k = 0; k < 5; ++k) {
            s[k] += pw;
            if (k < 3) {
                t[k] += pw * static_cast<long double>(p.y);
            }
            pw *= u;
        }
    }
    long double a[3][4];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            a[i][j] = s[i + j];
        }
        a[i][3] = t[i];
    }
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) {
                pivot = r;
            }
        }
        if (std::fabs(a[pivot][col]) < 1e-300L) {
            throw SingularFitError("quadratic fit normal equations are singular");
        }
        for (int j = 0; j < 4; ++j) {
            std::swap(a[col][j], a[pivot][j]);
        }
        for (int r = 0; r < 3; ++r) {
            if (r == col) {
                continue;
            }
            const long double f = a[r][col] / a[col][col];
            for (int j = col; j < 4; ++j) {
                a[r][j] -= f * a[col][j];
            }
        }
    }
    const long double b0 = a[0][3] / a[0][0];
    const long double b1 = a[1][3] / a[1][1];
    const long double b2 = a[2][3] / a[2][2];
    // y = b0 + b1·u + b2·u², u = (x - mean)/scale
    const long double c2 = b2 / (scale * scale);
    const long double c1 = b1 / scale - 2.0L * b2 * mean / (scale * scale);
    const long double c0 = b0 - b1 * mean / scale + b2 * mean * mean / (scale * scale);
    QuadFit fit;
    fit.c0 = static_cast<double>(c0);
    fit.c1 = static_cast<double>(c1);
    fit.c2 = static_cast<double>(c2);
    long double sse = 0.0L;
    for (const auto& p : points) {
        const long double x = p.x;
        const long double r = static_cast<long double>(p.y) - (c0 + c1 * x + c2 * x * x);
        sse += r * r;
    }
    fit.residual = static_cast<double>(std::sqrt(sse));
    return fit;
}

double scaling_exponent(std::span<const Point> points) {
    if (points.size() < 4) {
        throw ConfigError("scaling exponent needs at least 4 points, got " + std::to_string(points.size()));
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].x > 0.0)) {
            throw DomainError("scaling exponent needs positive lengths");
        }
        if (i > 0 && !(points[i].x > points[i - 1].x)) {
            throw ConfigError("scaling exponent needs strictly increasing lengths");
        }
        if (!(points[i].y > 0.0)) {
            throw DomainError("scaling exponent needs positive values, got " + std::to_string(points[i].y) +
                              " at L=" + std::to_string(points[i].x));
        }
    }
    const double cutoff = points.back().x / 10.0;
    std::vector<std::pair<double, double>> logs;
    for (const auto& p : points) {
        if (p.x >= cutoff) {
            logs.emplace_back(std::log(p.x), std::log(p.y));
        }
    }
    if (logs.size() < 2) {
        throw ConfigError("scaling exponent needs two points within the largest decade");
    }
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [lx, ly] : logs) {
        mx += lx;
        my += ly;
    }
    mx /= static_cast<double>(logs.size());
    my /= static_cast<double>(logs.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (const auto& [lx, ly] : logs) {
        sxy += (lx - mx) * (ly - my);
        sxx += (lx - mx) * (lx - mx);
    }
    return sxy / sxx;
}

double savings_percent(double skin, double bert) {
    if (!(bert > 0.0)) {
        throw DomainError("savings need a positive baseline cost");
    }
    return 100.0 * (1.0 - skin / bert);
}

namespace {

std::pair<double, bool> value_at(std::span<const SeriesPoint> series, double length, const char* name) {
    for (const auto& p : series) {
        if (p.length == length) {
            return {p.value, p.extrapolated};
        }
    }
    if (series.size() < 3) {
        throw ConfigError(std::string("no ") + name + " value at L=" + std::to_string(length) +
                          " and too few points to extrapolate");
    }
    std::vector<Point> pts;
    for (const auto& p : series) {
        pts.push_back({p.length, p.value});
    }
    return {quad_fit(pts)(length), true};
}

}  // namespace

Savings savings_report(std::span<const SeriesPoint> skin, std::span<const SeriesPoint> bert, double length) {
    Savings s;
    std::tie(s.skin, s.skin_extrapolated) = value_at(skin, length, "skin");
    std::tie(s.bert, s.bert_extrapolated) = value_at(bert, length, "bert");
    s.percent = savings_percent(s.skin, s.bert);
    return s;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        throw EmptyInputError("median of no values");
    }
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

namespace {

void validate(const BenchConfig& c) {
    if (c.methods.empty()) {
        throw ConfigError("bench needs at least one method");
    }
    if (c.lengths.empty()) {
        throw ConfigError("bench needs at least one length");
    }
    for (std::size_t i = 1; i < c.lengths.size(); ++i) {
        if (c.lengths[i] <= c.lengths[i - 1]) {
            throw ConfigError("bench lengths must be strictly ascending: " + join_lengths(c.lengths));
        }
    }
    if (!c.modeled_only && (c.trials == 0 || c.batch == 0)) {
        throw ConfigError("bench needs trials >= 1 and batch >= 1");
    }
    for (Method m : c.methods) {
        for (std::size_t len : c.lengths) {
            layout_for(m, len, c);
        }
    }
}

class SingleThread {
public:
    SingleThread() : saved_(omp_get_max_threads()), backend_(kernels::Backend::serial) { omp_set_num_threads(1); }
    ~SingleThread() { omp_set_num_threads(saved_); }
    SingleThread(const SingleThread&) = delete;
    SingleThread& operator=(const SingleThread&) = delete;

private:
    int saved_;
    kernels::ScopedBackend backend_;
};

struct Measurement {
    double seconds = 0.0;
    std::uint64_t peak = 0;
};

// Builds a model and batch for (method, L) and measures `trials` steps after
// `warmup` unrecorded ones.
std::vector<Measurement> measure(Method m, std::size_t length, const BenchConfig& c) {
    const Layout lay = layout_for(m, length, c);
    SynthSpec spec;
    spec.n = lay.n;
    spec.l = lay.l;
    spec.classes = c.classes;
    spec.docs = c.batch;
    spec.signal_tokens = std::min<std::size_t>(spec.signal_tokens, lay.l);
    spec.seed = rnd::derive(c.seed, 0x62656e6368, static_cast<std::uint64_t>(m), length);
    std::vector<SegmentedDoc> docs;
    for (auto& d : synth_generate(spec)) {
        docs.push_back(std::move(d.doc));
    }
    const std::size_t vocab = synth_vocab(spec).size();
    rnd::Engine rng(rnd::derive(c.seed, 0x696e6974, static_cast<std::uint64_t>(m), length));

    TrainConfig tc;
    tc.batch = c.batch;
    tc.epochs1 = 1;
    tc.epochs3 = 1;
    tc.seed = c.seed;

    std::function<void()> step;
    SkinParams skin_params;
    BaselineParams base_params;
    if (m == Method::bert || m == Method::slide_window) {
        const BaselineKind kind = m == Method::bert ? BaselineKind::truncate : BaselineKind::slide_window;
        const std::size_t max_len = baseline_input_length(kind, lay.n, lay.l, length, lay.l);
        base_params = BaselineParams::init(kind, strong_config(c, vocab, max_len), c.classes, length, lay.l, rng);
        step = [&] { train_baseline(docs, base_params, tc); };
    } else {
        skin_params = SkinParams::init(lite_config(c, vocab, lay.l + 2),
                                       strong_config(c, vocab, lay.l + lay.l / 2 + 2), c.classes, rng);
        step = [&] {
            std::vector<Distilled> distilled = distill_dataset(docs, skin_params);
            std::vector<KeySegment> keys;
            for (auto& d : distilled) {
                keys.push_back(std::move(d.key));
            }
            distilled.clear();
            train_stage3(docs, keys, skin_params, tc);
        };
    }

    std::vector<Measurement> out;
    for (std::size_t i = 0; i < c.warmup + c.trials; ++i) {
        const std::size_t before = memory::live_elements();
        memory::reset_peak();
        const auto t0 = std::chrono::steady_clock::now();
        step();
        const auto t1 = std::chrono::steady_clock::now();
        if (i >= c.warmup) {
            Measurement meas;
            meas.seconds = std::chrono::duration<double>(t1 - t0).count();
            meas.peak = memory::peak_elements() - before;
            out.push_back(meas);
        }
    }
    return out;
}

}  // namespace

std::vector<CostSample> run_cost_sweep(const BenchConfig& config) {
    validate(config);
    std::vector<CostSample> samples;
    SingleThread single;
    for (Method m : config.methods) {
        std::vector<Point> time_pts;
        std::vector<Point> peak_pts;
        std::vector<std::size_t> pending;
        std::vector<std::size_t> measured;
        for (std::size_t len : config.lengths) {
            const bool too_long = strong_input_length(m, len, config) > config.max_measured_length;
            if (config.modeled_only) {
                CostSample s;
                s.method = m;
                s.length = len;
                s.modeled = modeled_cost(m, len, config);
                s.extrapolated = too_long;
                samples.push_back(s);
                continue;
            }
            if (too_long) {
                pending.push_back(len);
                continue;
            }
            measured.push_back(len);
            std::vector<Measurement> runs = measure(m, len, config);
            std::vector<double> secs;
            std::uint64_t peak = 0;
            for (std::size_t t = 0; t < runs.size(); ++t) {
                CostSample s;
                s.method = m;
                s.length = len;
                s.trial = t;
                s.wall_time_s = runs[t].seconds;
                s.modeled = modeled_cost(m, len, config);
                s.peak_elems = runs[t].peak;
                samples.push_back(s);
                secs.push_back(runs[t].seconds);
                peak = std::max(peak, runs[t].peak);
            }
            time_pts.push_back({static_cast<double>(len), median(secs)});
            peak_pts.push_back({static_cast<double>(len), static_cast<double>(peak)});
        }
        if (!pending.empty()) {
            if (measured.size() < 3) {
                throw ConfigError(to_string(m) + " cannot run L=" + join_lengths(pending) +
                                  " (strong input above " + std::to_string(config.max_measured_length) +
                                  ") and has only " + std::to_string(measured.size()) +
                                  " measurable lengths to extrapolate from; at least 3 are needed");
            }
            const QuadFit tf = quad_fit(time_pts);
            const QuadFit pf = quad_fit(peak_pts);
            for (std::size_t len : pending) {
                for (std::size_t t = 0; t < config.trials; ++t) {
                    CostSample s;
                    s.method = m;
                    s.length = len;
                    s.trial = t;
                    s.wall_time_s = tf(static_cast<double>(len));
                    s.modeled = modeled_cost(m, len, config);
                    s.peak_elems = static_cast<std::uint64_t>(std::llround(std::max(0.0, pf(static_cast<double>(len)))));
                    s.extrapolated = true;
                    samples.push_back(s);
                }
            }
            // Keep rows grouped by method and ascending L.
            std::stable_sort(samples.begin(), samples.end(), [](const CostSample& a, const CostSample& b) {
                if (a.method != b.method) {
                    return static_cast<int>(a.method) < static_cast<int>(b.method);
                }
                return a.length < b.length;
            });
        }
    }
    return samples;
}

namespace {

std::optional<double> maybe_exponent(const std::vector<Point>& pts) {
    if (pts.size() < 4) {
        return std::nullopt;
    }
    for (const auto& p : pts) {
        if (!(p.y > 0.0)) {
            return std::nullopt;
        }
    }
    return scaling_exponent(pts);
}

std::optional<QuadFit> maybe_fit(const std::vector<Point>& pts) {
    if (pts.size() < 3) {
        return std::nullopt;
    }
    return quad_fit(pts);
}

}  // namespace

SweepResult summarize(const BenchConfig& config, std::vector<CostSample> samples) {
    SweepResult result;
    result.config = config;
    for (Method m : config.methods) {
        MethodSummary summary;
        summary.method = m;
        std::map<std::size_t, std::vector<const CostSample*>> by_len;
        for (const auto& s : samples) {
            if (s.method == m) {
                by_len[s.length].push_back(&s);
            }
        }
        std::vector<Point> modeled_pts;
        std::vector<Point> skim_pts;
        std::vector<Point> time_pts;
        std::vector<Point> peak_pts;
        for (const auto& [len, rows] : by_len) {
            SweepPoint p;
            p.method = m;
            p.length = len;
            p.modeled = rows.front()->modeled;
            std::vector<double> secs;
            for (const auto* r : rows) {
                secs.push_back(r->wall_time_s);
                p.peak_elems = std::max(p.peak_elems, r->peak_elems);
                p.extrapolated = p.extrapolated || r->extrapolated;
            }
            p.median_wall_time_s = median(secs);
            summary.points.push_back(p);
            const auto x = static_cast<double>(len);
            modeled_pts.push_back({x, static_cast<double>(p.modeled.total())});
            skim_pts.push_back({x, static_cast<double>(p.modeled.skim)});
            time_pts.push_back({x, p.median_wall_time_s});
            peak_pts.push_back({x, static_cast<double>(p.peak_elems)});
        }
        if (auto e = maybe_exponent(modeled_pts)) {
            summary.modeled_exponent = *e;
        }
        if (m == Method::skin_invariable || m == Method::skin_variable) {
            summary.modeled_skim_exponent = maybe_exponent(skim_pts);
        }
        summary.modeled_fit = maybe_fit(modeled_pts);
        if (!config.modeled_only) {
            summary.time_exponent = maybe_exponent(time_pts);
            summary.time_fit = maybe_fit(time_pts);
            summary.peak_fit = maybe_fit(peak_pts);
        }
        result.methods.push_back(std::move(summary));
    }

    const MethodSummary* bert = nullptr;
    const MethodSummary* skin = nullptr;
    for (const auto& s : result.methods) {
        if (s.method == Method::bert) {
            bert = &s;
        }
        if (s.method == Method::skin_variable || (s.method == Method::skin_invariable && skin == nullptr)) {
            skin = &s;
        }
    }
    if (bert != nullptr && skin != nullptr && !config.lengths.empty()) {
        auto series = [](const MethodSummary& s) {
            std::vector<SeriesPoint> out;
            for (const auto& p : s.points) {
                out.push_back({static_cast<double>(p.length), static_cast<double>(p.modeled.total()), p.extrapolated});
            }
            return out;
        };
        const auto sk = series(*skin);
        const auto bt = series(*bert);
        result.savings = savings_report(sk, bt, static_cast<double>(config.lengths.back()));
    }
    result.samples = std::move(samples);
    return result;
}

void write_csv(const std::filesystem::path& path, std::span<const CostSample> samples) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.precision(17);
    out << "method,L,trial,wall_time_s,modeled_elems,peak_elems\n";
    for (const auto& s : samples) {
        out << to_string(s.method) << ',' << s.length << ',' << s.trial << ',' << s.wall_time_s << ','
            << s.modeled.total() << ',' << s.peak_elems << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

namespace {

nlohmann::ordered_json fit_json(const std::optional<QuadFit>& fit) {
    if (!fit) {
        return nullptr;
    }
    return {{"c0", fit->c0}, {"c1", fit->c1}, {"c2", fit->c2}, {"residual", fit->residual}};
}

template <class T>
nlohmann::ordered_json opt_json(const std::optional<T>& v) {
    if (!v) {
        return nullptr;
    }
    return *v;
}

}  // namespace

void write_summary_json(const std::filesystem::path& path, const SweepResult& result) {
    nlohmann::ordered_json j;
    const BenchConfig& c = result.config;
    std::vector<std::string> names;
    for (Method m : c.methods) {
        names.push_back(to_string(m));
    }
    j["config"] = {{"methods", names},
                   {"lengths", c.lengths},
                   {"trials", c.trials},
                   {"warmup", c.warmup},
                   {"batch", c.batch},
                   {"segments", c.segments},
                   {"segment_len", c.segment_len},
                   {"max_measured_length", c.max_measured_length},
                   {"paper_dims", c.paper_dims},
                   {"modeled_only", c.modeled_only},
                   {"seed", c.seed}};
    j["methods"] = nlohmann::ordered_json::array();
    for (const auto& s : result.methods) {
        nlohmann::ordered_json m;
        m["method"] = to_string(s.method);
        m["points"] = nlohmann::ordered_json::array();
        for (const auto& p : s.points) {
            m["points"].push_back({{"L", p.length},
                                   {"median_wall_time_s", p.median_wall_time_s},
                                   {"modeled_elems", p.modeled.total()},
                                   {"modeled_skim_elems", p.modeled.skim},
                                   {"modeled_key_elems", p.modeled.key},
                                   {"peak_elems", p.peak_elems},
                                   {"extrapolated", p.extrapolated}});
        }
        m["modeled_exponent"] = s.modeled_exponent;
        m["modeled_skim_exponent"] = opt_json(s.modeled_skim_exponent);
        m["time_exponent"] = opt_json(s.time_exponent);
        m["modeled_fit"] = fit_json(s.modeled_fit);
        m["time_fit"] = fit_json(s.time_fit);
        m["peak_fit"] = fit_json(s.peak_fit);
        j["methods"].push_back(m);
    }
    if (result.savings) {
        const Savings& s = *result.savings;
        j["savings"] = {{"L", c.lengths.back()},
                        {"percent", s.percent},
                        {"skin_elems", s.skin},
                        {"bert_elems", s.bert},
                        {"skin_extrapolated", s.skin_extrapolated},
                        {"bert_extrapolated", s.bert_extrapolated}};
    } else {
        j["savings"] = nullptr;
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

void write_dat(const std::filesystem::path& path, const SweepResult& result) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.precision(17);
    bool first = true;
    for (const auto& s : result.methods) {
        if (!first) {
            out << "\n\n";
        }
        first = false;
        out << "# " << to_string(s.method) << "\n# L modeled_elems median_wall_time_s peak_elems extrapolated\n";
        for (const auto& p : s.points) {
            out << p.length << ' ' << p.modeled.total() << ' ' << p.median_wall_time_s << ' ' << p.peak_elems << ' '
                << (p.extrapolated ? 1 : 0) << '\n';
        }
    }
}

}  // namespace skin::bench
