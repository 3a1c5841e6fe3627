#include "skin/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace skin {

namespace {
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

void track_alloc(std::size_t n) {
    if (n == 0) {
        return;
    }
    const std::size_t now = g_live.fetch_add(n, std::memory_order_relaxed) + n;
    std::size_t peak = g_peak.load(std::memory_order_relaxed);
    while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
}

void track_free(std::size_t n) {
    if (n != 0) {
        g_live.fetch_sub(n, std::memory_order_relaxed);
    }
}
}  // namespace

namespace memory {
std::size_t live_elements() { return g_live.load(std::memory_order_relaxed); }
std::size_t peak_elements() { return g_peak.load(std::memory_order_relaxed); }
void reset_peak() { g_peak.store(g_live.load(std::memory_order_relaxed), std::memory_order_relaxed); }
}  // namespace memory

namespace detail {

TrackedBuffer::TrackedBuffer(std::size_t n, double fill) : values_(n, fill) { track_alloc(n); }

TrackedBuffer::TrackedBuffer(std::vector<double> values) : values_(std::move(values)) {
    track_alloc(values_.size());
}

TrackedBuffer::TrackedBuffer(const TrackedBuffer& other) : values_(other.values_) {
    track_alloc(values_.size());
}

TrackedBuffer::TrackedBuffer(TrackedBuffer&& other) noexcept : values_(std::move(other.values_)) {
    other.values_.clear();
}

TrackedBuffer& TrackedBuffer::operator=(const TrackedBuffer& other) {
    if (this != &other) {
        track_free(values_.size());
        values_ = other.values_;
        track_alloc(values_.size());
    }
    return *this;
}

TrackedBuffer& TrackedBuffer::operator=(TrackedBuffer&& other) noexcept {
    if (this != &other) {
        track_free(values_.size());
        values_ = std::move(other.values_);
        other.values_.clear();
    }
    return *this;
}

TrackedBuffer::~TrackedBuffer() { track_free(values_.size()); }

void TrackedBuffer::clear() {
    track_free(values_.size());
    values_.clear();
    values_.shrink_to_fit();
}

}  // namespace detail

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != values.size()) {
        throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    data_ = detail::TrackedBuffer(std::move(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged matrix literal");
        }
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 1) {
        return 1;
    }
    if (shape_.size() != 2) {
        throw DimensionError("expected a matrix, got " + shape_str(shape_));
    }
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 1) {
        return shape_[0];
    }
    if (shape_.size() != 2) {
        throw DimensionError("expected a matrix, got " + shape_str(shape_));
    }
    return shape_[1];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != size()) {
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

void Tensor::enable_grad() {
    if (!has_grad_) {
        grad_ = detail::TrackedBuffer(size(), 0.0);
        has_grad_ = true;
    }
}

void Tensor::zero_grad() {
    if (has_grad_) {
        std::fill(grad_.begin(), grad_.end(), 0.0);
    }
}

void Tensor::drop_grad() {
    grad_.clear();
    has_grad_ = false;
}

std::span<double> Tensor::grad() {
    if (!has_grad_) {
        throw ContractError("tensor " + shape_str(shape_) + " has no gradient buffer");
    }
    return {grad_.data(), grad_.size()};
}

std::span<const double> Tensor::grad() const {
    if (!has_grad_) {
        throw ContractError("tensor " + shape_str(shape_) + " has no gradient buffer");
    }
    return {grad_.data(), grad_.size()};
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

}  // namespace skin
