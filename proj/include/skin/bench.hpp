#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "skin/encoder.hpp"

namespace skin::bench {

enum class Method { bert, slide_window, skin_invariable, skin_variable };

std::string to_string(Method m);
// "bert", "slidewindow", "skin-invariable", "skin-variable"
Method parse_method(const std::string& name);
std::vector<Method> all_methods();

struct SingularFitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct BenchConfig {
    std::vector<Method> methods = all_methods();
    std::vector<std::size_t> lengths = {128, 256, 512, 1024, 2048};
    std::size_t trials = 5;
    std::size_t warmup = 1;
    std::size_t batch = 16;
    // Segment count for skin-invariable and slidewindow.
    std::size_t segments = 8;
    // Segment length for skin-variable.
    std::size_t segment_len = 64;
    // Longest strong-encoder content length that is actually run; longer
    // inputs are extrapolated from a quadratic fit.
    std::size_t max_measured_length = 512;
    bool paper_dims = false;
    bool modeled_only = false;
    std::size_t classes = 3;
    std::uint64_t seed = 0;
};

struct Layout {
    std::size_t n = 0;
    std::size_t l = 0;
};

/// (n, l) for a method at total length L. skin-variable fixes l and sets
/// n = L/l; the others fix n and set l = L/n.
Layout layout_for(Method m, std::size_t length, const BenchConfig& config);

/// Content length of the longest strong-encoder input.
std::size_t strong_input_length(Method m, std::size_t length, const BenchConfig& config);

/// Attention-score elements N·h·L² summed over every encoder call of one
/// sample (content lengths, no [CLS]/[SEP]).
struct ModeledCost {
    std::uint64_t skim = 0;  // lite encoder over all segments (SkIn only)
    std::uint64_t key = 0;   // strong encoder calls
    std::uint64_t total() const { return skim + key; }
};
ModeledCost modeled_cost(Method m, std::size_t length, const BenchConfig& config);

struct CostSample {
    Method method = Method::bert;
    std::size_t length = 0;
    std::size_t trial = 0;
    double wall_time_s = 0.0;
    ModeledCost modeled;
    std::uint64_t peak_elems = 0;
    bool extrapolated = false;
};

struct QuadFit {
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double residual = 0.0;  // √SSE
    double operator()(double x) const { return c0 + c1 * x + c2 * x * x; }
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Least squares y = c0 + c1·x + c2·x² through the normal equations.
QuadFit quad_fit(std::span<const Point> points);

/// Slope of ln y against ln x over points with x ≥ max(x)/10.
double scaling_exponent(std::span<const Point> points);

struct SeriesPoint {
    double length = 0.0;
    double value = 0.0;
    bool extrapolated = false;
};

struct Savings {
    double percent = 0.0;
    double skin = 0.0;
    double bert = 0.0;
    bool skin_extrapolated = false;
    bool bert_extrapolated = false;
};

double savings_percent(double skin, double bert);
/// Looks up L in each series, falling back to a quadratic fit (flagged as
/// extrapolated) when L is missing and the series has ≥ 3 points.
Savings savings_report(std::span<const SeriesPoint> skin, std::span<const SeriesPoint> bert, double length);

struct SweepPoint {
    Method method = Method::bert;
    std::size_t length = 0;
    double median_wall_time_s = 0.0;
    ModeledCost modeled;
    std::uint64_t peak_elems = 0;
    bool extrapolated = false;
};

struct MethodSummary {
    Method method = Method::bert;
    std::vector<SweepPoint> points;
    double modeled_exponent = 0.0;
    std::optional<double> modeled_skim_exponent;
    std::optional<double> time_exponent;
    std::optional<QuadFit> modeled_fit;
    std::optional<QuadFit> time_fit;
    std::optional<QuadFit> peak_fit;
};

struct SweepResult {
    BenchConfig config;
    std::vector<CostSample> samples;
    std::vector<MethodSummary> methods;
    std::optional<Savings> savings;  // skin-variable vs bert at the largest L
};

double median(std::vector<double> values);

/// Times one forward+backward+Adam step per trial for every method × L.
std::vector<CostSample> run_cost_sweep(const BenchConfig& config);

/// Fits, exponents and savings over the samples of one sweep.
SweepResult summarize(const BenchConfig& config, std::vector<CostSample> samples);

void write_csv(const std::filesystem::path& path, std::span<const CostSample> samples);
void write_summary_json(const std::filesystem::path& path, const SweepResult& result);
void write_dat(const std::filesystem::path& path, const SweepResult& result);

}  // namespace skin::bench
