#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace skin::detail {

// OpenMP loop over [0, n) that rethrows the exception from the lowest failing
// index after the loop joins.
template <class F>
void parallel_for(std::size_t n, F&& body) {
    std::exception_ptr error;
    std::size_t error_index = n;
    std::mutex guard;
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        const auto si = static_cast<std::size_t>(i);
        try {
            body(si);
        } catch (...) {
            std::lock_guard<std::mutex> lock(guard);
            if (si < error_index) {
                error_index = si;
                error = std::current_exception();
            }
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace skin::detail
