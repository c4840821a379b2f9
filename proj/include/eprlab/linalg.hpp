#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace eprlab {

// Closed-form families cap the dimension at 16; every state vector lives in
// fixed-capacity storage so a time step never touches the heap.
inline constexpr int kMaxDim = 16;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                          kMaxDim, kMaxDim>;

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline Vec to_vec(std::span<const double> values) {
    Vec v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
    return v;
}

inline Vec to_vec(std::initializer_list<double> values) {
    return to_vec(std::span<const double>(values.begin(), values.size()));
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

/// Largest eigenvalue of the symmetric part (M + M*)/2.
inline double max_symmetric_eigenvalue(const Mat& m) {
    const Mat sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().maxCoeff();
}

inline double operator_norm(const Mat& m) {
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

}  // namespace eprlab
