#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace skin {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Live/peak element accounting for every tensor buffer. Used by the cost
// benchmark to measure the transient working set of a training step.
namespace memory {
std::size_t live_elements();
std::size_t peak_elements();
// Sets the peak to the current live count.
void reset_peak();
}  // namespace memory

namespace detail {
// std::vector<double> whose element count is reported to memory::*.
class TrackedBuffer {
public:
    TrackedBuffer() = default;
    explicit TrackedBuffer(std::size_t n, double fill = 0.0);
    explicit TrackedBuffer(std::vector<double> values);
    TrackedBuffer(const TrackedBuffer& other);
    TrackedBuffer(TrackedBuffer&& other) noexcept;
    TrackedBuffer& operator=(const TrackedBuffer& other);
    TrackedBuffer& operator=(TrackedBuffer&& other) noexcept;
    ~TrackedBuffer();

    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    auto begin() { return values_.begin(); }
    auto end() { return values_.end(); }
    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }
    void clear();

private:
    std::vector<double> values_;
};
}  // namespace detail

/// Dense row-major tensor of doubles with an optional gradient buffer of the
/// same shape. Rank-1 tensors act as vectors; rank-2 as matrices.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    // Matrix view helpers; a rank-1 tensor of length d is treated as 1×d.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> data() { return {data_.data(), data_.size()}; }
    std::span<const double> data() const { return {data_.data(), data_.size()}; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    std::span<double> row(std::size_t r) { return data().subspan(r * cols(), cols()); }
    std::span<const double> row(std::size_t r) const { return data().subspan(r * cols(), cols()); }

    // Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool has_grad() const { return has_grad_; }
    void enable_grad();
    void zero_grad();
    void drop_grad();
    std::span<double> grad();
    std::span<const double> grad() const;

    bool all_finite() const;
    void fill(double value);

private:
    Shape shape_;
    detail::TrackedBuffer data_;
    detail::TrackedBuffer grad_;
    bool has_grad_ = false;
};

// Throws DimensionError naming both shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace skin
