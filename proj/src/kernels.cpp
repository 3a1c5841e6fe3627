#include "skin/kernels.hpp"

#include <algorithm>
#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace skin::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::openmp};

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelThreshold = 1u << 15;

// Row kernels shared by both backends; they fix the per-row accumulation
// order that makes serial and parallel results identical.
inline void row_nn(std::size_t i, std::size_t k, std::size_t n, const double* a, const double* b,
                   double* c) {
    double* crow = c + i * n;
    std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
            crow[j] += av * brow[j];
        }
    }
}

inline void row_nt(std::size_t i, std::size_t k, std::size_t n, const double* a, const double* b,
                   double* c) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            acc += arow[p] * brow[p];
        }
        crow[j] = acc;
    }
}

inline void row_tn(std::size_t i, std::size_t m, std::size_t k, std::size_t n, const double* a,
                   const double* b, double* c) {
    double* crow = c + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p * m + i];
        if (av == 0.0) {
            continue;
        }
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
            crow[j] += av * brow[j];
        }
    }
}
}  // namespace

void set_backend(Backend backend) { g_backend.store(backend); }
Backend backend() { return g_backend.load(); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace serial {
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
    for (std::size_t i = 0; i < m; ++i) {
        row_nn(i, k, n, a.data(), b.data(), c.data());
    }
}

void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
    for (std::size_t i = 0; i < m; ++i) {
        row_nt(i, k, n, a.data(), b.data(), c.data());
    }
}

void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
    for (std::size_t i = 0; i < m; ++i) {
        row_tn(i, m, k, n, a.data(), b.data(), c.data());
    }
}
}  // namespace serial

namespace omp {
void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
    const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
    for (long long i = 0; i < rows; ++i) {
        row_nn(static_cast<std::size_t>(i), k, n, a.data(), b.data(), c.data());
    }
}

void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
    const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
    for (long long i = 0; i < rows; ++i) {
        row_nt(static_cast<std::size_t>(i), k, n, a.data(), b.data(), c.data());
    }
}

void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
    const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
    for (long long i = 0; i < rows; ++i) {
        row_tn(static_cast<std::size_t>(i), m, k, n, a.data(), b.data(), c.data());
    }
}
}  // namespace omp

void matmul_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
    if (backend() == Backend::openmp) {
        omp::matmul_nn(m, k, n, a, b, c);
    } else {
        serial::matmul_nn(m, k, n, a, b, c);
    }
}

void matmul_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
    if (backend() == Backend::openmp) {
        omp::matmul_nt(m, k, n, a, b, c);
    } else {
        serial::matmul_nt(m, k, n, a, b, c);
    }
}

void matmul_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
    if (backend() == Backend::openmp) {
        omp::matmul_tn(m, k, n, a, b, c);
    } else {
        serial::matmul_tn(m, k, n, a, b, c);
    }
}

}  // namespace skin::kernels
