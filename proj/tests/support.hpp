#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "skin/random.hpp"
#include "skin/tensor.hpp"

namespace testing {

inline skin::Tensor random_tensor(const skin::Shape& shape, skin::rnd::Engine& rng, double lo = -1.0,
                                  double hi = 1.0) {
    skin::Tensor t(shape);
    for (auto& v : t.data()) {
        v = lo + (hi - lo) * skin::rnd::uniform01(rng);
    }
    return t;
}

// Σ w·y for a fixed random w: a scalar whose gradient w.r.t. y is w, so any
// op can be checked by feeding w into its backward.
inline double dot(const skin::Tensor& w, const skin::Tensor& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += w[i] * y[i];
    }
    return s;
}

inline void add_grad(skin::Tensor& x, const skin::Tensor& dx) {
    auto g = x.grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
        g[i] += dx[i];
    }
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("skin_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testing
