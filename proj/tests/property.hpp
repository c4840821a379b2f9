#pragma once

#include "eprlab/linalg.hpp"
#include "eprlab/noise.hpp"

#include <cstddef>
#include <cstdint>

// Minimal generators for property tests: every case draws from its own
// NoiseStream so a failing case can be replayed from (seed, case index).
namespace eprlab::testing {

inline constexpr std::uint64_t kPropertySeed = 20240601;

class Gen {
public:
    explicit Gen(std::uint64_t case_index) : rng_(kPropertySeed, case_index) {}

    double uniform(double lo, double hi) { return lo + (hi - lo) * rng_.uniform(); }
    double normal() { return rng_.normal(); }
    int integer(int lo, int hi) { return lo + static_cast<int>(rng_.uniform() * (hi - lo + 1)); }

    Vec vec(int dim, double scale = 1.0) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v[i] = scale * rng_.normal();
        return v;
    }
    Mat mat(int rows, int cols, double scale = 1.0) {
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = scale * rng_.normal();
        return m;
    }
    Mat antisymmetric(int dim, double scale = 1.0) {
        const Mat m = mat(dim, dim, scale);
        return m - m.transpose();
    }
    /// Well-conditioned invertible matrix: identity plus a small perturbation.
    Mat invertible(int dim) { return Mat::Identity(dim, dim) + mat(dim, dim, 0.2 / dim); }

    NoiseStream& stream() { return rng_; }

private:
    NoiseStream rng_;
};

inline constexpr std::size_t kCases = 100;

}  // namespace eprlab::testing
