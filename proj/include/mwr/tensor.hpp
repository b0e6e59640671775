#pragma once

#include "mwr/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mwr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Dims = std::vector<std::size_t>;

inline std::size_t product(std::span<const std::size_t> dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string format_dims(std::span<const std::size_t> dims) {
    std::ostringstream os;
    os << '(';
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (k) os << 'x';
        os << dims[k];
    }
    os << ')';
    return os.str();
}

/// Dense multiway array of doubles.
///
/// Values are stored first-index-fastest: the entry at 0-based index
/// (i_0, ..., i_{K-1}) lives at i_0 + I_0 * (i_1 + I_1 * (i_2 + ...)).
/// This is the vec() ordering, so vec is a copy of the storage and a
/// Matrix (column-major) converts without reordering.
class DenseTensor {
public:
    /// Empty placeholder (order 0, no values).
    DenseTensor() = default;

    /// Zero-filled tensor.
    explicit DenseTensor(Dims dims) : dims_(std::move(dims)) {
        check_dims();
        values_.assign(product(dims_), 0.0);
    }

    DenseTensor(Dims dims, std::vector<double> values)
        : dims_(std::move(dims)), values_(std::move(values)) {
        check_dims();
        if (values_.size() != product(dims_))
            throw ShapeError("tensor " + format_dims(dims_) + " needs " +
                             std::to_string(product(dims_)) + " values, got " +
                             std::to_string(values_.size()));
        for (double v : values_)
            if (!std::isfinite(v)) throw DataError("tensor values must be finite");
    }

    static DenseTensor from_matrix(const Matrix& m) {
        return DenseTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                           std::vector<double>(m.data(), m.data() + m.size()));
    }

    static DenseTensor from_vector(const Vector& v) {
        return DenseTensor({static_cast<std::size_t>(v.size())},
                           std::vector<double>(v.data(), v.data() + v.size()));
    }

    [[nodiscard]] bool empty() const { return dims_.empty(); }
    [[nodiscard]] std::size_t order() const { return dims_.size(); }
    [[nodiscard]] const Dims& dims() const { return dims_; }
    [[nodiscard]] std::size_t dim(std::size_t k) const { return dims_.at(k); }
    [[nodiscard]] std::size_t size() const { return values_.size(); }

    [[nodiscard]] std::span<const double> values() const { return values_; }
    [[nodiscard]] std::span<double> values() { return values_; }
    [[nodiscard]] const double* data() const { return values_.data(); }
    [[nodiscard]] double* data() { return values_.data(); }

    [[nodiscard]] double operator[](std::size_t flat) const { return values_[flat]; }
    double& operator[](std::size_t flat) { return values_[flat]; }

    [[nodiscard]] std::size_t linear_index(std::span<const std::size_t> idx) const {
        if (idx.size() != dims_.size())
            throw ShapeError("index has " + std::to_string(idx.size()) + " entries for order-" +
                             std::to_string(dims_.size()) + " tensor");
        std::size_t flat = 0;
        std::size_t stride = 1;
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            if (idx[k] >= dims_[k]) throw ShapeError("index out of range in mode " + std::to_string(k));
            flat += stride * idx[k];
            stride *= dims_[k];
        }
        return flat;
    }

    [[nodiscard]] double at(std::initializer_list<std::size_t> idx) const {
        return values_[linear_index(std::span<const std::size_t>(idx.begin(), idx.size()))];
    }
    double& at(std::initializer_list<std::size_t> idx) {
        return values_[linear_index(std::span<const std::size_t>(idx.begin(), idx.size()))];
    }

    /// Column-major view with `rows` leading entries per column.
    [[nodiscard]] Eigen::Map<const Matrix> as_matrix(std::size_t rows) const {
        return {values_.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(rows ? values_.size() / rows : 0)};
    }
    [[nodiscard]] Eigen::Map<Matrix> as_matrix(std::size_t rows) {
        return {values_.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(rows ? values_.size() / rows : 0)};
    }

    DenseTensor& operator+=(const DenseTensor& o) {
        require_same_dims(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    DenseTensor& operator-=(const DenseTensor& o) {
        require_same_dims(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    DenseTensor& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }

    friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
    friend DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
    friend DenseTensor operator*(double s, DenseTensor a) { return a *= s; }

    friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

private:
    void check_dims() const {
        for (std::size_t d : dims_)
            if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + format_dims(dims_));
    }
    void require_same_dims(const DenseTensor& o) const {
        if (o.dims_ != dims_)
            throw ShapeError("dimension mismatch " + format_dims(dims_) + " vs " + format_dims(o.dims_));
    }

    Dims dims_;
    std::vector<double> values_;
};

/// vec(t): entries in first-index-fastest order.
inline Vector vec(const DenseTensor& t) {
    return Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
}

inline DenseTensor reshape(const Vector& v, Dims dims) {
    return DenseTensor(std::move(dims), std::vector<double>(v.data(), v.data() + v.size()));
}

/// Mode-k unfolding (k is 0-based): I_k rows; columns enumerate the remaining
/// modes in their original order, first remaining index fastest.
inline Matrix unfold(const DenseTensor& t, std::size_t k) {
    if (k >= t.order())
        throw InvalidArgument("unfold: mode " + std::to_string(k) + " out of range for order-" +
                              std::to_string(t.order()) + " tensor");
    const auto& d = t.dims();
    const std::size_t left = product(std::span(d).first(k));
    const std::size_t ik = d[k];
    const std::size_t right = product(std::span(d).subspan(k + 1));
    Matrix out(static_cast<Eigen::Index>(ik), static_cast<Eigen::Index>(left * right));
    const double* src = t.data();
    for (std::size_t r = 0; r < right; ++r)
        for (std::size_t i = 0; i < ik; ++i)
            for (std::size_t l = 0; l < left; ++l)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l + left * r)) =
                    src[l + left * (i + ik * r)];
    return out;
}

/// Inverse of unfold for a tensor of the given dims.
inline DenseTensor fold(const Matrix& m, std::size_t k, Dims dims) {
    if (k >= dims.size()) throw InvalidArgument("fold: mode out of range");
    const std::size_t left = product(std::span(dims).first(k));
    const std::size_t ik = dims[k];
    const std::size_t right = product(std::span(dims).subspan(k + 1));
    if (static_cast<std::size_t>(m.rows()) != ik || static_cast<std::size_t>(m.cols()) != left * right)
        throw ShapeError("fold: matrix shape does not match " + format_dims(dims));
    DenseTensor t(std::move(dims));
    double* dst = t.data();
    for (std::size_t r = 0; r < right; ++r)
        for (std::size_t i = 0; i < ik; ++i)
            for (std::size_t l = 0; l < left; ++l)
                dst[l + left * (i + ik * r)] =
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l + left * r));
    return t;
}

/// Reorder modes: output mode j is input mode perm[j].
inline DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm) {
    const std::size_t K = t.order();
    if (perm.size() != K) throw InvalidArgument("permute: permutation length differs from order");
    std::vector<bool> seen(K, false);
    for (std::size_t p : perm) {
        if (p >= K || seen[p]) throw InvalidArgument("permute: not a permutation");
        seen[p] = true;
    }
    Dims out_dims(K);
    for (std::size_t j = 0; j < K; ++j) out_dims[j] = t.dim(perm[j]);
    // input strides, gathered in output order
    std::vector<std::size_t> in_stride(K);
    std::size_t s = 1;
    for (std::size_t k = 0; k < K; ++k) {
        in_stride[k] = s;
        s *= t.dim(k);
    }
    std::vector<std::size_t> stride(K);
    for (std::size_t j = 0; j < K; ++j) stride[j] = in_stride[perm[j]];

    DenseTensor out(out_dims);
    std::vector<std::size_t> idx(K, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
        out[flat] = t[src];
        for (std::size_t j = 0; j < K; ++j) {
            if (++idx[j] < out_dims[j]) {
                src += stride[j];
                break;
            }
            src -= stride[j] * (out_dims[j] - 1);
            idx[j] = 0;
        }
    }
    return out;
}

/// Outer product a_1 ∘ ... ∘ a_K.
inline DenseTensor outer(std::span<const Vector> vectors) {
    if (vectors.empty()) throw InvalidArgument("outer: empty vector list");
    Dims dims;
    for (const auto& v : vectors) {
        if (v.size() == 0) throw InvalidArgument("outer: empty vector");
        dims.push_back(static_cast<std::size_t>(v.size()));
    }
    std::vector<double> vals{1.0};
    for (const auto& v : vectors) {
        std::vector<double> next;
        next.reserve(vals.size() * static_cast<std::size_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i)
            for (double x : vals) next.push_back(x * v[i]);
        vals = std::move(next);
    }
    return DenseTensor(std::move(dims), std::move(vals));
}

inline DenseTensor outer(std::initializer_list<Vector> vectors) {
    return outer(std::span<const Vector>(vectors.begin(), vectors.size()));
}

/// Outer product of two tensors: dims a.dims ++ b.dims.
inline DenseTensor outer(const DenseTensor& a, const DenseTensor& b) {
    Dims dims = a.dims();
    dims.insert(dims.end(), b.dims().begin(), b.dims().end());
    std::vector<double> vals;
    vals.reserve(a.size() * b.size());
    for (double y : b.values())
        for (double x : a.values()) vals.push_back(x * y);
    return DenseTensor(std::move(dims), std::move(vals));
}

/// Khatri-Rao product of the factors (first factor's row index fastest):
/// column r is vec(a_{1r} ∘ ... ∘ a_{Kr}). An empty list gives a 1 x R row of ones.
inline Matrix khatri_rao(std::span<const Matrix> factors, Eigen::Index rank) {
    Matrix out = Matrix::Ones(1, rank);
    for (const auto& f : factors) {
        if (f.cols() != rank) throw ShapeError("khatri_rao: factor column counts differ");
        Matrix next(out.rows() * f.rows(), rank);
        for (Eigen::Index r = 0; r < rank; ++r)
            for (Eigen::Index i = 0; i < f.rows(); ++i)
                next.col(r).segment(i * out.rows(), out.rows()) = out.col(r) * f(i, r);
        out = std::move(next);
    }
    return out;
}

/// CP composition [[A_1, ..., A_K]] = sum_r a_{1r} ∘ ... ∘ a_{Kr}.
inline DenseTensor cp_compose(std::span<const Matrix> factors) {
    if (factors.empty()) throw InvalidArgument("cp_compose: no factors");
    const Eigen::Index R = factors.front().cols();
    Dims dims;
    for (const auto& f : factors) {
        if (f.cols() != R)
            throw ShapeError("cp_compose: factors have " + std::to_string(R) + " and " +
                             std::to_string(f.cols()) + " columns");
        dims.push_back(static_cast<std::size_t>(f.rows()));
    }
    const Matrix kr = khatri_rao(factors, R);
    return reshape(kr.rowwise().sum(), std::move(dims));
}

/// Contracted tensor product <a, b>_l: sums the trailing l modes of `a`
/// against the leading l modes of `b`. A result with no remaining modes is
/// returned as an order-1 tensor of size 1.
inline DenseTensor contract(const DenseTensor& a, const DenseTensor& b, std::size_t l) {
    if (l == 0) throw InvalidArgument("contract: l must be at least 1");
    if (a.order() < l || b.order() < l)
        throw ShapeError("contract: operands have fewer than l = " + std::to_string(l) + " modes");
    const std::size_t K = a.order() - l;
    for (std::size_t j = 0; j < l; ++j)
        if (a.dim(K + j) != b.dim(j))
            throw ShapeError("contract: contracted dimensions differ, " + format_dims(a.dims()) + " vs " +
                             format_dims(b.dims()));
    Dims out_dims(a.dims().begin(), a.dims().begin() + static_cast<std::ptrdiff_t>(K));
    out_dims.insert(out_dims.end(), b.dims().begin() + static_cast<std::ptrdiff_t>(l), b.dims().end());
    const std::size_t rows = product(std::span(a.dims()).first(K));
    const std::size_t inner = product(std::span(b.dims()).first(l));
    Matrix m = a.as_matrix(rows) * b.as_matrix(inner);
    if (out_dims.empty()) out_dims = {1};
    return DenseTensor(std::move(out_dims), std::vector<double>(m.data(), m.data() + m.size()));
}

/// Tensor-times-vector along `mode`; the mode is removed from the result
/// (an order-1 input yields a size-1 tensor).
inline DenseTensor ttv(const DenseTensor& t, std::size_t mode, const Vector& v) {
    if (mode >= t.order()) throw InvalidArgument("ttv: mode out of range");
    if (static_cast<std::size_t>(v.size()) != t.dim(mode)) throw ShapeError("ttv: vector length mismatch");
    const auto& d = t.dims();
    const std::size_t left = product(std::span(d).first(mode));
    const std::size_t ik = d[mode];
    const std::size_t right = product(std::span(d).subspan(mode + 1));
    Dims out_dims;
    for (std::size_t k = 0; k < d.size(); ++k)
        if (k != mode) out_dims.push_back(d[k]);
    if (out_dims.empty()) out_dims = {1};
    DenseTensor out(std::move(out_dims));
    const double* src = t.data();
    double* dst = out.data();
    for (std::size_t r = 0; r < right; ++r)
        for (std::size_t i = 0; i < ik; ++i) {
            const double w = v[static_cast<Eigen::Index>(i)];
            const double* s = src + left * (i + ik * r);
            double* o = dst + left * r;
            for (std::size_t l = 0; l < left; ++l) o[l] += w * s[l];
        }
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("hadamard: shape mismatch");
    return a.cwiseProduct(b);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline double frob_norm(const DenseTensor& t) {
    return vec(t).norm();
}

inline double squared_norm(const DenseTensor& t) {
    return vec(t).squaredNorm();
}

} // namespace mwr
