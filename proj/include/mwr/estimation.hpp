#pragma once

#include "mwr/model.hpp"
#include "mwr/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mwr {

/// Hyperparameters of the penalized alternating least squares fit.
struct FitConfig {
    std::size_t rank = 1;
    double lambda = 0.0;
    std::size_t max_iters = 500;
    double rel_tol = 1e-8;
    std::size_t anneal_steps = 10;
    double anneal_start_factor = 100.0;
    std::uint64_t seed = 0;
    double init_scale = 1.0;
    bool center_data = true;
    std::size_t n_starts = 1;
    /// Record the objective after every individual factor update.
    bool trace_substeps = false;

    void validate() const {
        if (rank < 1) throw InvalidArgument("rank must be at least 1");
        if (!std::isfinite(lambda) || lambda < 0) throw InvalidArgument("lambda must be finite and >= 0");
        if (!std::isfinite(rel_tol) || rel_tol <= 0) throw InvalidArgument("rel_tol must be > 0");
        if (!std::isfinite(anneal_start_factor) || anneal_start_factor <= 0)
            throw InvalidArgument("anneal_start_factor must be > 0");
        if (!std::isfinite(init_scale) || init_scale <= 0) throw InvalidArgument("init_scale must be > 0");
        if (max_iters < 1) throw InvalidArgument("max_iters must be at least 1");
        if (n_starts < 1) throw InvalidArgument("n_starts must be at least 1");
    }
};

/// Per-cell means removed from X and Y before fitting.
struct Centering {
    bool enabled = false;
    DenseTensor x_offset;  ///< dims = in_dims
    DenseTensor y_offset;  ///< dims = out_dims, or {1} for a scalar response
};

struct SubstepRecord {
    double lambda;
    double objective;
};

struct FitResult {
    CpCoefficients coefficients;
    std::vector<double> objective_trace;   ///< penalized objective after each sweep, at that sweep's lambda
    std::vector<double> lambda_trace;      ///< lambda used in each sweep
    std::vector<SubstepRecord> substep_trace;
    std::size_t anneal_sweeps = 0;
    bool converged = false;
    std::size_t iterations = 0;
    double objective = 0.0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    Centering centering;
};

struct CenteredData {
    DenseTensor x;
    DenseTensor y;
    Centering centering;
};

namespace detail {

inline Dims trailing_dims(const DenseTensor& t) {
    return Dims(t.dims().begin() + 1, t.dims().end());
}

inline std::size_t num_obs(const DenseTensor& t) {
    return t.dim(0);
}

inline void check_pair(const DenseTensor& x, const DenseTensor& y) {
    if (x.empty() || y.empty()) throw ShapeError("predictor and outcome arrays must be non-empty");
    if (x.order() < 2) throw ShapeError("predictor array needs at least one mode besides observations");
    if (x.dim(0) != y.dim(0))
        throw ShapeError("observation counts differ: x has N = " + std::to_string(x.dim(0)) + ", y has N = " +
                         std::to_string(y.dim(0)));
}

inline void check_coefficients(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b) {
    check_pair(x, y);
    if (b.in_dims() != trailing_dims(x))
        throw ShapeError("coefficient predictor dims " + format_dims(b.in_dims()) + " do not match x " +
                         format_dims(x.dims()));
    if (b.out_dims() != trailing_dims(y))
        throw ShapeError("coefficient outcome dims " + format_dims(b.out_dims()) + " do not match y " +
                         format_dims(y.dims()));
}

/// Khatri-Rao of the outcome factors (Q x R); a 1 x R row of ones when M = 0.
inline Matrix outcome_kr(const CpCoefficients& b) {
    return khatri_rao(b.outcome_factors(), static_cast<Eigen::Index>(b.rank()));
}

/// S (N x R): s_r[n] = <X_n, u_1r ∘ ... ∘ u_Lr>.
inline Matrix predictor_scores(const DenseTensor& x, const CpCoefficients& b) {
    const Matrix kr = khatri_rao(b.predictor_factors(), static_cast<Eigen::Index>(b.rank()));
    return x.as_matrix(num_obs(x)) * kr;
}

/// Hadamard product of the Gram matrices of the listed factor modes.
inline Matrix gram_product(const CpCoefficients& b, std::size_t first, std::size_t last, std::size_t skip) {
    const auto R = static_cast<Eigen::Index>(b.rank());
    Matrix g = Matrix::Ones(R, R);
    for (std::size_t k = first; k < last; ++k)
        if (k != skip) g = g.cwiseProduct(b.factor(k).transpose() * b.factor(k));
    return g;
}

/// W_r (N x P_l): X contracted with u_kr over every predictor mode except l.
inline Matrix partial_scores(const DenseTensor& x, const CpCoefficients& b, std::size_t l, Eigen::Index r) {
    const std::size_t L = b.num_predictor_modes();
    DenseTensor t = x;
    for (std::size_t k = L; k-- > 0;)
        if (k != l) t = ttv(t, k + 1, b.factor(k).col(r));
    return t.as_matrix(num_obs(x));
}

inline std::string singular_message(const char* what, double lambda) {
    std::string msg = std::string(what) + ": normal-equation system is singular or not positive definite";
    if (lambda == 0.0) msg += " (the subproblem is not identifiable; use lambda > 0 or a lower rank)";
    return msg;
}

/// Cholesky factorization of a symmetric positive-definite system; raises
/// SingularSystemError on failure or when some pivot has lost all but a
/// 1e-13 fraction of its diagonal entry (a scale-free rank test).
inline Eigen::LLT<Matrix> factorize_spd(const Matrix& a, double lambda, const char* what) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw SingularSystemError(singular_message(what, lambda));
    const Vector diag = a.diagonal();
    const Vector pivots = llt.matrixLLT().diagonal();
    for (Eigen::Index i = 0; i < diag.size(); ++i)
        if (!(diag[i] > 0) || !std::isfinite(pivots[i]) || pivots[i] * pivots[i] <= 1e-13 * diag[i])
            throw SingularSystemError(singular_message(what, lambda));
    return llt;
}

} // namespace detail

/// Remove per-cell means over the observation mode from x and y.
inline CenteredData center(const DenseTensor& x, const DenseTensor& y) {
    detail::check_pair(x, y);
    const std::size_t N = x.dim(0);
    if (N < 2) throw InvalidArgument("centering needs at least 2 observations");
    CenteredData out{x, y, {}};
    out.centering.enabled = true;
    auto take_means = [N](DenseTensor& t, Dims offset_dims) {
        auto m = t.as_matrix(N);
        const Eigen::RowVectorXd mean = m.colwise().mean();
        m.rowwise() -= mean;
        if (offset_dims.empty()) offset_dims = {1};
        return DenseTensor(std::move(offset_dims), std::vector<double>(mean.data(), mean.data() + mean.size()));
    };
    out.centering.x_offset = take_means(out.x, detail::trailing_dims(x));
    out.centering.y_offset = take_means(out.y, detail::trailing_dims(y));
    return out;
}

/// <X, B>_L computed through the factor structure.
inline DenseTensor predict_centered(const DenseTensor& x, const CpCoefficients& b) {
    if (b.in_dims() != detail::trailing_dims(x))
        throw ShapeError("predictor dims " + format_dims(x.dims()) + " do not match coefficients " +
                         format_dims(b.in_dims()));
    const Matrix yhat = detail::predictor_scores(x, b) * detail::outcome_kr(b).transpose();
    Dims dims{x.dim(0)};
    const Dims out = b.out_dims();
    dims.insert(dims.end(), out.begin(), out.end());
    return DenseTensor(std::move(dims), std::vector<double>(yhat.data(), yhat.data() + yhat.size()));
}

/// ||Y - <X,B>_L||_F^2 + lambda ||B||_F^2.
inline double objective(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b, double lambda) {
    detail::check_coefficients(x, y, b);
    const Matrix resid = y.as_matrix(y.dim(0)) - detail::predictor_scores(x, b) * detail::outcome_kr(b).transpose();
    return resid.squaredNorm() + lambda * squared_norm(b);
}

/// Design matrix C (NQ x R P_l) for predictor mode l (0-based), built
/// literally: block r unfolds <X, rank-1 term r without U_l>_{L-1} along P_l.
inline Matrix build_design_predictor(const DenseTensor& x, const CpCoefficients& b, std::size_t l) {
    const std::size_t L = b.num_predictor_modes();
    if (l >= L) throw InvalidArgument("build_design_predictor: invalid predictor mode " + std::to_string(l));
    if (b.in_dims() != detail::trailing_dims(x)) throw ShapeError("build_design_predictor: x does not match coefficients");
    const std::size_t N = x.dim(0);
    const auto R = static_cast<Eigen::Index>(b.rank());
    const auto Pl = static_cast<Eigen::Index>(b.factor(l).rows());
    const std::size_t Q = product(b.out_dims());

    // bring P_l right after the observation mode
    std::vector<std::size_t> perm{0, l + 1};
    for (std::size_t k = 0; k < L; ++k)
        if (k != l) perm.push_back(k + 1);
    const DenseTensor xp = permute(x, perm);

    Matrix C(static_cast<Eigen::Index>(N * Q), R * Pl);
    for (Eigen::Index r = 0; r < R; ++r) {
        std::vector<Vector> cols;
        for (std::size_t k = 0; k < b.num_modes(); ++k)
            if (k != l) cols.push_back(b.factor(k).col(r));
        DenseTensor cr;
        if (cols.empty()) {
            cr = xp;
        } else {
            const DenseTensor term = outer(cols);
            cr = L > 1 ? contract(xp, term, L - 1) : outer(xp, term);
        }
        // cr: N x P_l x Q_1 x ... x Q_M
        C.middleCols(r * Pl, Pl) = unfold(cr, 1).transpose();
    }
    return C;
}

/// Design matrix D (N prod_{k != m} Q_k x R) for outcome mode m (0-based):
/// column r is vec(<X, rank-1 term r without V_m>_L).
inline Matrix build_design_outcome(const DenseTensor& x, const CpCoefficients& b, std::size_t m) {
    const std::size_t L = b.num_predictor_modes();
    const std::size_t M = b.num_outcome_modes();
    if (M == 0) throw InvalidArgument("build_design_outcome: no outcome modes");
    if (m >= M) throw InvalidArgument("build_design_outcome: invalid outcome mode " + std::to_string(m));
    if (b.in_dims() != detail::trailing_dims(x)) throw ShapeError("build_design_outcome: x does not match coefficients");
    const auto R = static_cast<Eigen::Index>(b.rank());
    Matrix D;
    for (Eigen::Index r = 0; r < R; ++r) {
        std::vector<Vector> cols;
        for (std::size_t k = 0; k < b.num_modes(); ++k)
            if (k != L + m) cols.push_back(b.factor(k).col(r));
        const Vector d = vec(contract(x, outer(cols), L));
        if (r == 0) D.resize(d.size(), R);
        D.col(r) = d;
    }
    return D;
}

/// Normal equations A * sol = rhs of one factor subproblem. For predictor
/// modes sol is vec(U_l) (rhs has one column); for outcome modes sol is
/// V_m^T (rhs is R x Q_m).
struct FactorSystem {
    Matrix A;
    Matrix rhs;
};

/// System for predictor factor U_l with all other factors fixed:
///   (C^T C + lambda G_{-l} ⊗ I) vec(U_l) = C^T vec(Y),
/// assembled from per-component partial scores instead of C itself.
inline FactorSystem predictor_system(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b,
                                     std::size_t l, double lambda) {
    detail::check_coefficients(x, y, b);
    const std::size_t L = b.num_predictor_modes();
    if (l >= L) throw InvalidArgument("predictor_system: invalid predictor mode " + std::to_string(l));
    const auto R = static_cast<Eigen::Index>(b.rank());
    const Eigen::Index Pl = b.factor(l).rows();
    const auto N = static_cast<Eigen::Index>(x.dim(0));

    // C_r = w_r ⊗ W_r, where w_r = vec of the outcome rank-1 term
    Matrix W(N, R * Pl);
    for (Eigen::Index r = 0; r < R; ++r) W.middleCols(r * Pl, Pl) = detail::partial_scores(x, b, l, r);
    const Matrix kv = detail::outcome_kr(b);
    const Matrix outcome_gram = kv.transpose() * kv;
    const Matrix penalty_gram = gram_hadamard(b, l);
    const Matrix yk = y.as_matrix(static_cast<std::size_t>(N)) * kv;  // N x R

    FactorSystem sys{W.transpose() * W, Matrix(R * Pl, 1)};
    for (Eigen::Index r = 0; r < R; ++r) {
        for (Eigen::Index s = 0; s < R; ++s) {
            auto block = sys.A.block(r * Pl, s * Pl, Pl, Pl);
            block *= outcome_gram(r, s);
            block.diagonal().array() += lambda * penalty_gram(r, s);
        }
        sys.rhs.middleRows(r * Pl, Pl) = W.middleCols(r * Pl, Pl).transpose() * yk.col(r);
    }
    return sys;
}

/// System for outcome factor V_m: (D^T D + lambda G_{-m}) V_m^T = D^T Y_m^T.
inline FactorSystem outcome_system(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b,
                                   std::size_t m, double lambda) {
    detail::check_coefficients(x, y, b);
    const std::size_t L = b.num_predictor_modes();
    const std::size_t M = b.num_outcome_modes();
    if (m >= M) throw InvalidArgument("outcome_system: invalid outcome mode " + std::to_string(m));
    const auto R = static_cast<Eigen::Index>(b.rank());
    const std::size_t N = x.dim(0);

    const Matrix S = detail::predictor_scores(x, b);
    FactorSystem sys;
    sys.A = (S.transpose() * S).cwiseProduct(detail::gram_product(b, L, L + M, L + m)) +
            lambda * gram_hadamard(b, L + m);

    // D^T Y_m^T: row r contracts Y with s_r over observations and with v_kr
    // over the outcome modes other than m
    const Matrix sy = S.transpose() * y.as_matrix(N);  // R x Q
    const Dims out_dims = b.out_dims();
    sys.rhs.resize(R, b.factor(L + m).rows());
    for (Eigen::Index r = 0; r < R; ++r) {
        DenseTensor t(out_dims);
        for (Eigen::Index q = 0; q < sy.cols(); ++q) t[static_cast<std::size_t>(q)] = sy(r, q);
        for (std::size_t k = M; k-- > 0;)
            if (k != m) t = ttv(t, k, b.factor(L + k).col(r));
        sys.rhs.row(r) = vec(t).transpose();
    }
    return sys;
}

/// Ridge-penalized least squares update of predictor factor U_l (0-based).
inline Matrix update_predictor_factor(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b,
                                      std::size_t l, double lambda) {
    const FactorSystem sys = predictor_system(x, y, b, l, lambda);
    const Vector sol = detail::factorize_spd(sys.A, lambda, "update_predictor_factor").solve(sys.rhs);
    return Eigen::Map<const Matrix>(sol.data(), b.factor(l).rows(), static_cast<Eigen::Index>(b.rank()));
}

/// Ridge-penalized update of outcome factor V_m (0-based):
///   V_m = ((D^T D + lambda G_{-m})^{-1} D^T Y_m^T)^T.
inline Matrix update_outcome_factor(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b,
                                    std::size_t m, double lambda) {
    const FactorSystem sys = outcome_system(x, y, b, m, lambda);
    return detail::factorize_spd(sys.A, lambda, "update_outcome_factor").solve(sys.rhs).transpose();
}

/// Update for flat factor mode k (predictor modes first).
inline Matrix update_factor(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b, std::size_t k,
                            double lambda) {
    const std::size_t L = b.num_predictor_modes();
    return k < L ? update_predictor_factor(x, y, b, k, lambda) : update_outcome_factor(x, y, b, k - L, lambda);
}

/// Lambda for each annealing sweep, descending geometrically. A positive
/// target starts at anneal_start_factor * max(lambda, 1) and stops one
/// geometric step above lambda; a zero target runs from 1 down to 1e-4.
inline std::vector<double> anneal_schedule(const FitConfig& cfg) {
    std::vector<double> out;
    const std::size_t n = cfg.anneal_steps;
    const bool positive = cfg.lambda > 0;
    const double start = positive ? cfg.anneal_start_factor * std::max(cfg.lambda, 1.0) : 1.0;
    const double end = positive ? cfg.lambda : 1e-4;
    const double steps = positive ? static_cast<double>(n) : static_cast<double>(n > 1 ? n - 1 : 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(start * std::pow(end / start, static_cast<double>(i) / steps));
    return out;
}

namespace detail {

template <class UpdateFn, class ObjectiveFn>
FitResult run_als(CpCoefficients b, const FitConfig& cfg, UpdateFn&& update, ObjectiveFn&& eval) {
    FitResult res;
    res.lambda = cfg.lambda;
    res.seed = cfg.seed;
    const std::vector<double> schedule = anneal_schedule(cfg);
    res.anneal_sweeps = std::min(schedule.size(), cfg.max_iters);
    std::optional<double> prev_fixed;
    for (std::size_t sweep = 0; sweep < cfg.max_iters; ++sweep) {
        const bool annealing = sweep < schedule.size();
        const double lam = annealing ? schedule[sweep] : cfg.lambda;
        for (std::size_t k = 0; k < b.num_modes(); ++k) {
            b.set_factor(k, update(b, k, lam));
            if (cfg.trace_substeps) res.substep_trace.push_back({lam, eval(b, lam)});
        }
        const double obj = eval(b, lam);
        res.objective_trace.push_back(obj);
        res.lambda_trace.push_back(lam);
        res.iterations = sweep + 1;
        if (!annealing) {
            if (prev_fixed && std::abs(*prev_fixed - obj) <= cfg.rel_tol * std::abs(*prev_fixed)) {
                res.converged = true;
                break;
            }
            prev_fixed = obj;
        }
    }
    res.objective = res.objective_trace.empty() ? eval(b, cfg.lambda) : res.objective_trace.back();
    res.coefficients = std::move(b);
    return res;
}

inline CenteredData prepare(const DenseTensor& x, const DenseTensor& y, bool center_data) {
    check_pair(x, y);
    if (center_data) return center(x, y);
    CenteredData out{x, y, {}};
    return out;
}

} // namespace detail

/// Penalized alternating least squares fit of Y ≈ <X, B>_L with rank(B) <= R.
///
/// Each start draws N(0, init_scale^2) factors from its own seeded stream,
/// anneals lambda over the first sweeps and then iterates at the target
/// lambda until the relative objective change drops below rel_tol. Sweeps
/// update U_1..U_L then V_1..V_M. The start with the lowest final objective wins.
inline FitResult fit(const DenseTensor& x, const DenseTensor& y, const FitConfig& cfg) {
    cfg.validate();
    CenteredData data = detail::prepare(x, y, cfg.center_data);
    const Dims in_dims = detail::trailing_dims(x);
    const Dims out_dims = detail::trailing_dims(y);

    std::optional<FitResult> best;
    for (std::size_t start = 0; start < cfg.n_starts; ++start) {
        Rng rng = make_rng(cfg.seed, start);
        CpCoefficients init = random_cp(in_dims, out_dims, cfg.rank, rng, cfg.init_scale);
        FitResult res = detail::run_als(
            std::move(init), cfg,
            [&](const CpCoefficients& b, std::size_t k, double lam) { return update_factor(data.x, data.y, b, k, lam); },
            [&](const CpCoefficients& b, double lam) { return objective(data.x, data.y, b, lam); });
        if (!best || res.objective < best->objective) best = std::move(res);
    }
    best->centering = std::move(data.centering);
    return std::move(*best);
}

/// Apply a fit to new predictors: centre with the stored offsets, contract,
/// add back the outcome offsets.
inline DenseTensor predict(const DenseTensor& x_new, const CpCoefficients& b, const Centering& centering) {
    if (x_new.empty() || x_new.order() < 2) throw ShapeError("predict: x_new needs an observation mode");
    if (detail::trailing_dims(x_new) != b.in_dims())
        throw ShapeError("predict: x_new dims " + format_dims(x_new.dims()) + " do not match model predictor dims " +
                         format_dims(b.in_dims()));
    const std::size_t N = x_new.dim(0);
    if (!centering.enabled) return predict_centered(x_new, b);
    DenseTensor xc = x_new;
    xc.as_matrix(N).rowwise() -= vec(centering.x_offset).transpose();
    DenseTensor yhat = predict_centered(xc, b);
    yhat.as_matrix(N).rowwise() += vec(centering.y_offset).transpose();
    return yhat;
}

inline DenseTensor predict(const DenseTensor& x_new, const FitResult& fit) {
    return predict(x_new, fit.coefficients, fit.centering);
}

// ---------------------------------------------------------------------------
// Augmented-data oracle: ridge as unpenalized least squares on stacked data.

namespace detail {

inline DenseTensor stack_observations(const DenseTensor& a, const DenseTensor& b) {
    const Matrix top = a.as_matrix(a.dim(0));
    const Matrix bottom = b.as_matrix(b.dim(0));
    if (top.cols() != bottom.cols()) throw ShapeError("stack_observations: trailing dims differ");
    Matrix m(top.rows() + bottom.rows(), top.cols());
    m << top, bottom;
    Dims dims = a.dims();
    dims[0] = a.dim(0) + b.dim(0);
    return DenseTensor(std::move(dims), std::vector<double>(m.data(), m.data() + m.size()));
}

inline Vector least_squares(const Matrix& a, const Vector& rhs) {
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    if (qr.rank() < a.cols()) throw SingularSystemError("augmented oracle: design matrix is rank deficient");
    return qr.solve(rhs);
}

} // namespace detail

/// X~ = [X; sqrt(lambda) e_j slices] and Y~ = [Y; 0], both with N + P observations.
inline std::pair<DenseTensor, DenseTensor> augment_data(const DenseTensor& x, const DenseTensor& y, double lambda) {
    detail::check_pair(x, y);
    const Dims in_dims = detail::trailing_dims(x);
    const std::size_t P = product(in_dims);
    Dims xd{P};
    xd.insert(xd.end(), in_dims.begin(), in_dims.end());
    DenseTensor pad_x(xd);
    pad_x.as_matrix(P).diagonal().setConstant(std::sqrt(lambda));
    Dims yd = y.dims();
    yd[0] = P;
    return {detail::stack_observations(x, pad_x), detail::stack_observations(y, DenseTensor(yd))};
}

inline constexpr std::size_t augmented_size_limit = 20'000'000;

/// Factor-k update computed from the augmented data with explicit design
/// matrices and an unpenalized QR least-squares solve.
inline Matrix update_factor_augmented(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b,
                                      std::size_t k, double lambda) {
    detail::check_coefficients(x, y, b);
    const std::size_t P = product(b.in_dims());
    const std::size_t Q = product(b.out_dims());
    const std::size_t NP = x.dim(0) + P;
    if (NP * P > augmented_size_limit || NP * Q * b.rank() * P > 50 * augmented_size_limit)
        throw InvalidArgument("augmented oracle: instance too large");
    const auto [xa, ya] = augment_data(x, y, lambda);
    const std::size_t L = b.num_predictor_modes();
    if (k < L) {
        const Matrix C = build_design_predictor(xa, b, k);
        const Vector sol = detail::least_squares(C, vec(ya));
        return Eigen::Map<const Matrix>(sol.data(), b.factor(k).rows(), static_cast<Eigen::Index>(b.rank()));
    }
    const std::size_t m = k - L;
    const Matrix D = build_design_outcome(xa, b, m);
    const Matrix ym = unfold(ya, 1 + m).transpose();
    Matrix V(ym.cols(), static_cast<Eigen::Index>(b.rank()));
    Eigen::ColPivHouseholderQR<Matrix> qr(D);
    if (qr.rank() < D.cols()) throw SingularSystemError("augmented oracle: design matrix is rank deficient");
    V = qr.solve(ym).transpose();
    return V;
}

/// Augmented objective ||Y~ - <X~, B>_L||^2 evaluated through the dense B.
inline double objective_augmented(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b, double lambda) {
    const auto [xa, ya] = augment_data(x, y, lambda);
    DenseTensor resid = ya;
    const DenseTensor pred = contract(xa, materialize(b), b.num_predictor_modes());
    const Vector r = vec(resid) - vec(pred);
    return r.squaredNorm();
}

/// Same algorithm as fit, but every update solves the unpenalized problem on
/// the augmented arrays. Correctness oracle for small instances only.
inline FitResult fit_augmented_oracle(const DenseTensor& x, const DenseTensor& y, const FitConfig& cfg) {
    cfg.validate();
    CenteredData data = detail::prepare(x, y, cfg.center_data);
    const Dims in_dims = detail::trailing_dims(x);
    const Dims out_dims = detail::trailing_dims(y);
    const std::size_t P = product(in_dims);
    if ((x.dim(0) + P) * P > augmented_size_limit) throw InvalidArgument("augmented oracle: instance too large");

    std::optional<FitResult> best;
    for (std::size_t start = 0; start < cfg.n_starts; ++start) {
        Rng rng = make_rng(cfg.seed, start);
        CpCoefficients init = random_cp(in_dims, out_dims, cfg.rank, rng, cfg.init_scale);
        FitResult res = detail::run_als(
            std::move(init), cfg,
            [&](const CpCoefficients& b, std::size_t k, double lam) {
                return update_factor_augmented(data.x, data.y, b, k, lam);
            },
            [&](const CpCoefficients& b, double lam) { return objective_augmented(data.x, data.y, b, lam); });
        if (!best || res.objective < best->objective) best = std::move(res);
    }
    best->centering = std::move(data.centering);
    return std::move(*best);
}

} // namespace mwr
