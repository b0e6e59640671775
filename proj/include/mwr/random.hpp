#pragma once

#include "mwr/model.hpp"

#include <cstdint>
#include <random>

namespace mwr {

using Rng = std::mt19937_64;

/// Independent RNG stream for (seed, stream) pairs, e.g. restarts or replicates.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

inline Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> z;
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = z(rng);
    return m;
}

inline DenseTensor standard_normal_tensor(const Dims& dims, Rng& rng) {
    std::normal_distribution<double> z;
    DenseTensor t(dims);
    for (double& v : t.values()) v = z(rng);
    return t;
}

/// Factors with independent N(0, scale^2) entries, drawn in mode order
/// U_1..U_L, V_1..V_M, each column-major.
inline CpCoefficients random_cp(const Dims& in_dims, const Dims& out_dims, std::size_t rank, Rng& rng,
                                double scale = 1.0) {
    std::vector<Matrix> u, v;
    const auto R = static_cast<Eigen::Index>(rank);
    for (std::size_t p : in_dims) u.push_back(scale * standard_normal_matrix(static_cast<Eigen::Index>(p), R, rng));
    for (std::size_t q : out_dims) v.push_back(scale * standard_normal_matrix(static_cast<Eigen::Index>(q), R, rng));
    return {std::move(u), std::move(v)};
}

} // namespace mwr
