#pragma once

#include <cstddef>
#include <span>

// Dense GEMM kernels in three transposition variants. Every variant exists as
// a serial reference and an OpenMP row-parallel version. Both compute each
// output row with the same accumulation order, so results are bit-identical
// regardless of thread count.
namespace skin::kernels {

enum class Backend { serial, openmp };

// Process-wide selection used by the tensor ops. Defaults to openmp.
void set_backend(Backend backend);
Backend backend();

// RAII switch, restores the previous backend on scope exit.
class ScopedBackend {
public:
    explicit ScopedBackend(Backend b) : saved_(backend()) { set_backend(b); }
    ~ScopedBackend() { set_backend(saved_); }
    ScopedBackend(const ScopedBackend&) = delete;
    ScopedBackend& operator=(const ScopedBackend&) = delete;

private:
    Backend saved_;
};

// C[m×n]  = A[m×k]  · B[k×n]
// C[m×n]  = A[m×k]  · B[n×k]ᵀ
// C[m×n]  = A[k×m]ᵀ · B[k×n]
// All overwrite C.
namespace serial {
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
}  // namespace serial

namespace omp {
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
}  // namespace omp

// Dispatch through the current backend.
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c);

int max_threads();

}  // namespace skin::kernels
