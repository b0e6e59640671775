#pragma once

#include "mwr/tensor.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

namespace mwr {

/// Coefficient array B = [[U_1, ..., U_L, V_1, ..., V_M]] in CP form.
///
/// Factor modes are addressed by a flat index k in [0, L+M): predictor
/// modes first, then outcome modes. M = 0 (no outcome factors) is the
/// scalar-response case.
class CpCoefficients {
public:
    CpCoefficients() = default;

    CpCoefficients(std::vector<Matrix> predictor_factors, std::vector<Matrix> outcome_factors)
        : predictor_(std::move(predictor_factors)), outcome_(std::move(outcome_factors)) {
        if (predictor_.empty()) throw InvalidArgument("CpCoefficients: at least one predictor mode is required");
        rank_ = static_cast<std::size_t>(predictor_.front().cols());
        if (rank_ == 0) throw InvalidArgument("CpCoefficients: rank must be at least 1");
        for (std::size_t k = 0; k < num_modes(); ++k) {
            const Matrix& f = factor(k);
            if (static_cast<std::size_t>(f.cols()) != rank_)
                throw ShapeError("CpCoefficients: factors must share column count " + std::to_string(rank_));
            if (f.rows() == 0) throw ShapeError("CpCoefficients: factor with zero rows");
            if (!f.allFinite()) throw DataError("CpCoefficients: non-finite factor entry");
        }
    }

    /// Zero-initialized factors of the given shape.
    static CpCoefficients zeros(const Dims& in_dims, const Dims& out_dims, std::size_t rank) {
        std::vector<Matrix> u, v;
        for (std::size_t p : in_dims) u.push_back(Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(rank)));
        for (std::size_t q : out_dims) v.push_back(Matrix::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(rank)));
        return {std::move(u), std::move(v)};
    }

    [[nodiscard]] std::size_t rank() const { return rank_; }
    [[nodiscard]] std::size_t num_predictor_modes() const { return predictor_.size(); }
    [[nodiscard]] std::size_t num_outcome_modes() const { return outcome_.size(); }
    [[nodiscard]] std::size_t num_modes() const { return predictor_.size() + outcome_.size(); }

    [[nodiscard]] const std::vector<Matrix>& predictor_factors() const { return predictor_; }
    [[nodiscard]] const std::vector<Matrix>& outcome_factors() const { return outcome_; }

    [[nodiscard]] const Matrix& factor(std::size_t k) const {
        if (k >= num_modes()) throw InvalidArgument("factor mode " + std::to_string(k) + " out of range");
        return k < predictor_.size() ? predictor_[k] : outcome_[k - predictor_.size()];
    }

    void set_factor(std::size_t k, Matrix f) {
        const Matrix& cur = factor(k);
        if (f.rows() != cur.rows() || f.cols() != cur.cols())
            throw ShapeError("set_factor: replacement has the wrong shape");
        (k < predictor_.size() ? predictor_[k] : outcome_[k - predictor_.size()]) = std::move(f);
    }

    [[nodiscard]] std::vector<Matrix> all_factors() const {
        std::vector<Matrix> all = predictor_;
        all.insert(all.end(), outcome_.begin(), outcome_.end());
        return all;
    }

    [[nodiscard]] Dims in_dims() const {
        Dims d;
        for (const auto& u : predictor_) d.push_back(static_cast<std::size_t>(u.rows()));
        return d;
    }
    [[nodiscard]] Dims out_dims() const {
        Dims d;
        for (const auto& v : outcome_) d.push_back(static_cast<std::size_t>(v.rows()));
        return d;
    }

    friend bool operator==(const CpCoefficients& a, const CpCoefficients& b) {
        if (a.num_modes() != b.num_modes() || a.num_predictor_modes() != b.num_predictor_modes()) return false;
        for (std::size_t k = 0; k < a.num_modes(); ++k) {
            const Matrix &fa = a.factor(k), &fb = b.factor(k);
            if (fa.rows() != fb.rows() || fa.cols() != fb.cols() || fa != fb) return false;
        }
        return true;
    }

private:
    std::vector<Matrix> predictor_;
    std::vector<Matrix> outcome_;
    std::size_t rank_ = 0;
};

/// Dense B with dims in_dims ++ out_dims.
inline DenseTensor materialize(const CpCoefficients& b) {
    const auto factors = b.all_factors();
    return cp_compose(factors);
}

/// P x Q matricization: rows linearize the predictor modes, columns the
/// outcome modes, both first-index-fastest.
inline Matrix matricize(const CpCoefficients& b) {
    if (b.num_outcome_modes() == 0) throw InvalidArgument("matricize: undefined without outcome modes");
    const DenseTensor t = materialize(b);
    return t.as_matrix(product(b.in_dims()));
}

/// Hadamard product of the Gram matrices A_k^T A_k over every mode except
/// `skip`. Equals B^(skip)^T B^(skip), whose column r is the vectorized
/// rank-1 term r with mode `skip` left out.
inline Matrix gram_hadamard(const CpCoefficients& b, std::size_t skip) {
    if (skip >= b.num_modes()) throw InvalidArgument("gram_hadamard: invalid mode " + std::to_string(skip));
    const auto R = static_cast<Eigen::Index>(b.rank());
    Matrix g = Matrix::Ones(R, R);
    for (std::size_t k = 0; k < b.num_modes(); ++k)
        if (k != skip) g = g.cwiseProduct(b.factor(k).transpose() * b.factor(k));
    return g;
}

/// Hadamard product of all Gram matrices; 1^T G 1 = ||B||_F^2.
inline Matrix gram_hadamard_all(const CpCoefficients& b) {
    const auto R = static_cast<Eigen::Index>(b.rank());
    Matrix g = Matrix::Ones(R, R);
    for (std::size_t k = 0; k < b.num_modes(); ++k) g = g.cwiseProduct(b.factor(k).transpose() * b.factor(k));
    return g;
}

inline double squared_norm(const CpCoefficients& b) {
    return gram_hadamard_all(b).sum();
}

enum class Restrictions {
    scale_and_order,           ///< (a) equal column norms per component, (b) descending order
    scale_order_orthogonal,    ///< (a), (b) and (c) orthogonal columns, for L+M = 2
};

struct NormalizedForm {
    CpCoefficients coefficients;
    Restrictions applied = Restrictions::scale_and_order;
};

namespace detail {

inline Eigen::Index max_abs_index(const Eigen::Ref<const Vector>& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    return best;
}

inline bool columns_orthogonal(const Matrix& a, double tol) {
    const Matrix g = a.transpose() * a;
    for (Eigen::Index r = 0; r < g.rows(); ++r)
        for (Eigen::Index s = r + 1; s < g.cols(); ++s)
            if (std::abs(g(r, s)) > tol * std::sqrt(g(r, r) * g(s, s)) + tol * tol) return false;
    return true;
}

inline bool is_normalized(const CpCoefficients& b, double tol) {
    const std::size_t K = b.num_modes();
    const auto R = static_cast<Eigen::Index>(b.rank());
    double prev = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < R; ++r) {
        const double n0 = b.factor(0).col(r).norm();
        for (std::size_t k = 1; k < K; ++k)
            if (std::abs(b.factor(k).col(r).norm() - n0) > tol * n0) return false;
        if (n0 > prev) return false;
        prev = n0;
        if (n0 > 0 && b.factor(0)(max_abs_index(b.factor(0).col(r)), r) < 0) return false;
    }
    if (K == 2) return columns_orthogonal(b.factor(0), tol) && columns_orthogonal(b.factor(1), tol);
    return true;
}

} // namespace detail

/// Impose the identifiability restrictions post hoc without changing B.
///
/// Every component gets equal column norms across modes and components are
/// sorted by decreasing scale (stable on ties). When L+M = 2 the factors
/// are rebuilt from the SVD of B, so columns are also mutually orthogonal.
/// Per component, signs are flipped so the largest-magnitude entry of the
/// first factor's column is positive, compensated in the last factor.
/// Input that already satisfies all of this is returned unchanged.
inline NormalizedForm normalize(const CpCoefficients& b) {
    const std::size_t K = b.num_modes();
    const auto R = static_cast<Eigen::Index>(b.rank());
    const Restrictions applied = K == 2 ? Restrictions::scale_order_orthogonal : Restrictions::scale_and_order;

    for (Eigen::Index r = 0; r < R; ++r)
        for (std::size_t k = 0; k < K; ++k)
            if (b.factor(k).col(r).squaredNorm() == 0.0)
                throw DegenerateComponentError(static_cast<std::size_t>(r),
                                               "normalize: component " + std::to_string(r + 1) +
                                                   " has a zero column in mode " + std::to_string(k + 1));

    if (detail::is_normalized(b, 1e-12)) return {b, applied};

    std::vector<Matrix> f = b.all_factors();
    if (K == 2) {
        const Matrix B = f[0] * f[1].transpose();
        Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vector& sv = svd.singularValues();
        for (Eigen::Index r = 0; r < R; ++r) {
            if (r < sv.size()) {
                const double w = std::sqrt(sv[r]);
                f[0].col(r) = w * svd.matrixU().col(r);
                f[1].col(r) = w * svd.matrixV().col(r);
            } else {
                f[0].col(r).setZero();
                f[1].col(r).setZero();
            }
        }
    } else {
        std::vector<double> scale(static_cast<std::size_t>(R), 1.0);
        for (Eigen::Index r = 0; r < R; ++r) {
            // product of norms, accumulated in logs to avoid overflow
            double log_scale = 0.0;
            for (std::size_t k = 0; k < K; ++k) log_scale += std::log(f[k].col(r).norm());
            const double target = std::exp(log_scale / static_cast<double>(K));
            for (std::size_t k = 0; k < K; ++k) f[k].col(r) *= target / f[k].col(r).norm();
            scale[static_cast<std::size_t>(r)] = log_scale;
        }
        std::vector<Eigen::Index> order(static_cast<std::size_t>(R));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index c) {
            return scale[static_cast<std::size_t>(a)] > scale[static_cast<std::size_t>(c)];
        });
        for (auto& m : f) {
            Matrix sorted(m.rows(), m.cols());
            for (Eigen::Index j = 0; j < R; ++j) sorted.col(j) = m.col(order[static_cast<std::size_t>(j)]);
            m = std::move(sorted);
        }
    }

    for (Eigen::Index r = 0; r < R; ++r) {
        const Eigen::Index i = detail::max_abs_index(f[0].col(r));
        if (f[0](i, r) < 0) {
            f[0].col(r) *= -1.0;
            f[K - 1].col(r) *= -1.0;
        }
    }

    const std::size_t L = b.num_predictor_modes();
    std::vector<Matrix> u(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(L));
    std::vector<Matrix> v(f.begin() + static_cast<std::ptrdiff_t>(L), f.end());
    return {CpCoefficients(std::move(u), std::move(v)), applied};
}

struct BalanceCheck {
    double sum_sq_factor_norms = 0.0;
    double twice_nuclear_norm = 0.0;
};

/// For an L+M = 2 coefficient with orthogonal factor columns, returns
/// sum_k ||A_k||_F^2 and 2 ||B||_*. The two agree at a balanced representation.
inline BalanceCheck balance_check_prop1(const CpCoefficients& b, double orthogonality_tol = 1e-8) {
    if (b.num_modes() != 2) throw InvalidArgument("balance_check_prop1: requires L+M = 2");
    if (!detail::columns_orthogonal(b.factor(0), orthogonality_tol) ||
        !detail::columns_orthogonal(b.factor(1), orthogonality_tol))
        throw InvalidArgument("balance_check_prop1: factor columns are not orthogonal");
    const Matrix B = b.factor(0) * b.factor(1).transpose();
    Eigen::JacobiSVD<Matrix> svd(B);
    return {b.factor(0).squaredNorm() + b.factor(1).squaredNorm(), 2.0 * svd.singularValues().sum()};
}

} // namespace mwr
