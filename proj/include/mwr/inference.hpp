#pragma once

#include "mwr/estimation.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace mwr {

struct GibbsConfig {
    std::size_t n_samples = 1000;
    std::size_t burn_in = 0;
    std::size_t thin = 1;
    std::uint64_t seed = 0;
    double lambda = 0.0;
    std::size_t rank = 1;
    double credible_level = 0.95;
    /// Apply the identifiability transform to every retained draw.
    bool normalize_draws = false;
    /// Equalize each component's column norms across modes after every sweep.
    bool rebalance = true;

    void validate() const {
        if (n_samples < 1) throw InvalidArgument("n_samples must be at least 1");
        if (thin < 1) throw InvalidArgument("thin must be at least 1");
        if (rank < 1) throw InvalidArgument("rank must be at least 1");
        if (!std::isfinite(lambda) || lambda < 0) throw InvalidArgument("lambda must be finite and >= 0");
        if (!(credible_level > 0 && credible_level < 1)) throw InvalidArgument("credible_level must be in (0, 1)");
    }
};

struct PosteriorDraws {
    CpCoefficients mode;
    std::vector<CpCoefficients> factors;
    std::vector<double> sigma2;
    Centering centering;
    double lambda = 0.0;

    [[nodiscard]] std::size_t size() const { return factors.size(); }
};

/// Full conditional N(mean, sigma2 * A^{-1}) of one factor mode. For a
/// predictor mode the vector is vec(U_l); for an outcome mode the rows of
/// V_m are independent, each with covariance sigma2 * A^{-1}.
struct ConditionalParams {
    Matrix mean;  ///< same shape as the factor
    Eigen::LLT<Matrix> precision;  ///< Cholesky of A (precision / sigma2)
    double sigma2 = 0.0;
    bool outcome_mode = false;

    /// Dense covariance of vec(factor).
    [[nodiscard]] Matrix covariance() const {
        const auto n = precision.rows();
        const Matrix inv = precision.solve(Matrix::Identity(n, n));
        if (!outcome_mode) return sigma2 * inv;
        return sigma2 * kron(inv, Matrix::Identity(mean.rows(), mean.rows()));
    }

    /// mean + sigma L^{-T} z, with A = L L^T.
    [[nodiscard]] Matrix draw(Rng& rng) const {
        const double sd = std::sqrt(sigma2);
        const auto U = precision.matrixU();  // L^T
        if (!outcome_mode) {
            const Matrix z = standard_normal_matrix(mean.size(), 1, rng);
            const Vector e = U.solve(z);
            return mean + sd * Eigen::Map<const Matrix>(e.data(), mean.rows(), mean.cols());
        }
        const Matrix z = standard_normal_matrix(mean.cols(), mean.rows(), rng);  // R x Q_m
        return mean + sd * Matrix(U.solve(z)).transpose();
    }
};

/// sigma^2 | B ~ IG(NQ/2, RSS/2), the full conditional under the 1/sigma^2 prior.
inline double draw_sigma2(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b, Rng& rng) {
    const double rss = objective(x, y, b, 0.0);
    const double shape = 0.5 * static_cast<double>(y.size());
    if (!(rss > 0) || shape <= 1.0)
        throw NumericalError("draw_sigma2: degenerate posterior for sigma^2 (residual sum of squares " +
                             std::to_string(rss) + ", " + std::to_string(y.size()) + " outcome cells)");
    std::gamma_distribution<double> g(shape, 1.0);
    return 0.5 * rss / g(rng);
}

/// Conditional mean and covariance factor of flat factor mode k; the mean is
/// the ALS update computed from the same normal equations.
inline ConditionalParams conditional_factor_params(const DenseTensor& x, const DenseTensor& y, const CpCoefficients& b,
                                                   std::size_t k, double lambda, double sigma2) {
    if (!(sigma2 >= 0) || !std::isfinite(sigma2)) throw InvalidArgument("sigma2 must be finite and >= 0");
    const std::size_t L = b.num_predictor_modes();
    ConditionalParams out;
    out.sigma2 = sigma2;
    out.outcome_mode = k >= L;
    const FactorSystem sys = k < L ? predictor_system(x, y, b, k, lambda) : outcome_system(x, y, b, k - L, lambda);
    out.precision = detail::factorize_spd(sys.A, lambda, "conditional_factor_params");
    const Matrix sol = out.precision.solve(sys.rhs);
    if (k < L)
        out.mean = Eigen::Map<const Matrix>(sol.data(), b.factor(k).rows(), static_cast<Eigen::Index>(b.rank()));
    else
        out.mean = sol.transpose();
    return out;
}

/// Give every component equal column norms across modes without changing B.
/// The factor conditionals are equivariant under these rescalings, so the
/// chain on B is unaffected; it only stops the factor scales from drifting.
inline void rebalance_components(CpCoefficients& b) {
    const std::size_t K = b.num_modes();
    const auto R = static_cast<Eigen::Index>(b.rank());
    std::vector<Matrix> f = b.all_factors();
    for (Eigen::Index r = 0; r < R; ++r) {
        double log_scale = 0.0;
        bool degenerate = false;
        for (std::size_t k = 0; k < K; ++k) {
            const double n = f[k].col(r).norm();
            degenerate = degenerate || !(n > 0);
            log_scale += degenerate ? 0.0 : std::log(n);
        }
        if (degenerate) continue;
        const double target = std::exp(log_scale / static_cast<double>(K));
        for (std::size_t k = 0; k < K; ++k) f[k].col(r) *= target / f[k].col(r).norm();
    }
    for (std::size_t k = 0; k < K; ++k) b.set_factor(k, std::move(f[k]));
}

/// Gibbs sampler started at a given posterior mode. x and y are the raw
/// arrays; the mode's centering is applied before sampling.
inline PosteriorDraws gibbs(const DenseTensor& x, const DenseTensor& y, const FitResult& mode, const GibbsConfig& cfg) {
    cfg.validate();
    if (mode.coefficients.rank() != cfg.rank) throw InvalidArgument("gibbs: mode rank differs from config rank");
    detail::check_coefficients(x, y, mode.coefficients);
    DenseTensor xc = x, yc = y;
    if (mode.centering.enabled) {
        xc.as_matrix(x.dim(0)).rowwise() -= vec(mode.centering.x_offset).transpose();
        yc.as_matrix(y.dim(0)).rowwise() -= vec(mode.centering.y_offset).transpose();
    }

    PosteriorDraws out;
    out.mode = mode.coefficients;
    out.centering = mode.centering;
    out.lambda = cfg.lambda;
    out.factors.reserve(cfg.n_samples);
    out.sigma2.reserve(cfg.n_samples);

    Rng rng = make_rng(cfg.seed, 0x9e3779b97f4a7c15ULL);
    CpCoefficients b = mode.coefficients;
    const std::size_t total = cfg.burn_in + cfg.n_samples * cfg.thin;
    for (std::size_t t = 1; t <= total; ++t) {
        const double s2 = draw_sigma2(xc, yc, b, rng);
        for (std::size_t k = 0; k < b.num_modes(); ++k)
            b.set_factor(k, conditional_factor_params(xc, yc, b, k, cfg.lambda, s2).draw(rng));
        if (cfg.rebalance) rebalance_components(b);
        if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) {
            out.factors.push_back(cfg.normalize_draws ? normalize(b).coefficients : b);
            out.sigma2.push_back(s2);
        }
    }
    return out;
}

/// Fit the posterior mode with default ALS settings, then sample.
inline PosteriorDraws gibbs(const DenseTensor& x, const DenseTensor& y, const GibbsConfig& cfg) {
    cfg.validate();
    FitConfig fc;
    fc.rank = cfg.rank;
    fc.lambda = cfg.lambda;
    fc.seed = cfg.seed;
    return gibbs(x, y, fit(x, y, fc), cfg);
}

/// One response array per retained draw: <X_new, B_t> + N(0, sigma2_t) noise,
/// with the stored centering offsets applied.
inline std::vector<DenseTensor> posterior_predictive(const DenseTensor& x_new, const PosteriorDraws& draws, Rng& rng) {
    if (draws.size() == 0) throw InvalidArgument("posterior_predictive: no posterior draws");
    std::normal_distribution<double> z;
    std::vector<DenseTensor> out;
    out.reserve(draws.size());
    for (std::size_t t = 0; t < draws.size(); ++t) {
        DenseTensor yt = predict(x_new, draws.factors[t], draws.centering);
        const double sd = std::sqrt(draws.sigma2[t]);
        for (double& v : yt.values()) v += sd * z(rng);
        out.push_back(std::move(yt));
    }
    return out;
}

struct CredibleIntervals {
    DenseTensor lower;
    DenseTensor upper;
};

namespace detail {

/// Sample quantile with linear interpolation between order statistics
/// (the usual "type 7" definition). `sorted` must be ascending.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace detail

/// Equal-tailed intervals per cell at quantiles (1-level)/2 and (1+level)/2.
inline CredibleIntervals credible_intervals(const std::vector<DenseTensor>& draws, double level) {
    if (draws.size() < 2) throw InvalidArgument("credible_intervals: need at least 2 draws");
    if (!(level >= 0 && level < 1)) throw InvalidArgument("credible_intervals: level must be in [0, 1)");
    const Dims& dims = draws.front().dims();
    for (const auto& d : draws)
        if (d.dims() != dims) throw ShapeError("credible_intervals: draws have differing dims");
    CredibleIntervals ci{DenseTensor(dims), DenseTensor(dims)};
    std::vector<double> cell(draws.size());
    const double alpha = 0.5 * (1.0 - level);
    for (std::size_t i = 0; i < ci.lower.size(); ++i) {
        for (std::size_t t = 0; t < draws.size(); ++t) cell[t] = draws[t][i];
        std::sort(cell.begin(), cell.end());
        ci.lower[i] = detail::quantile_sorted(cell, alpha);
        ci.upper[i] = detail::quantile_sorted(cell, 1.0 - alpha);
    }
    return ci;
}

/// Posterior predictive intervals for x_new, generated in blocks of
/// observations so memory stays at chunk * Q * T values.
inline CredibleIntervals predictive_intervals(const DenseTensor& x_new, const PosteriorDraws& draws, double level,
                                              Rng& rng, std::size_t chunk = 50) {
    if (x_new.empty() || x_new.order() < 2) throw ShapeError("predictive_intervals: x_new needs an observation mode");
    const std::size_t N = x_new.dim(0);
    const std::size_t P = x_new.size() / N;
    const Matrix xm = x_new.as_matrix(N);
    CredibleIntervals out;
    Matrix lo, hi;
    Dims out_dims;
    for (std::size_t start = 0; start < N; start += chunk) {
        const std::size_t n = std::min(chunk, N - start);
        Dims xd = x_new.dims();
        xd[0] = n;
        const Matrix block = xm.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n));
        const DenseTensor xb(xd, std::vector<double>(block.data(), block.data() + n * P));
        const CredibleIntervals ci = credible_intervals(posterior_predictive(xb, draws, rng), level);
        if (start == 0) {
            out_dims = ci.lower.dims();
            const auto Q = static_cast<Eigen::Index>(ci.lower.size() / n);
            lo.resize(static_cast<Eigen::Index>(N), Q);
            hi.resize(static_cast<Eigen::Index>(N), Q);
        }
        lo.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = ci.lower.as_matrix(n);
        hi.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = ci.upper.as_matrix(n);
    }
    out_dims[0] = N;
    out.lower = DenseTensor(out_dims, std::vector<double>(lo.data(), lo.data() + lo.size()));
    out.upper = DenseTensor(out_dims, std::vector<double>(hi.data(), hi.data() + hi.size()));
    return out;
}

/// Deviance -2 log N(Y | Yhat, sigma2 I).
inline double gaussian_deviance(double rss, double n_cells, double sigma2) {
    return n_cells * std::log(2.0 * std::numbers::pi * sigma2) + rss / sigma2;
}

/// DIC = Dbar + pD, with pD = Dbar - D(posterior mean prediction, posterior mean sigma2).
inline double dic(const DenseTensor& x, const DenseTensor& y, const PosteriorDraws& draws) {
    if (draws.size() < 2) throw InvalidArgument("dic: need at least 2 draws");
    detail::check_pair(x, y);
    const std::size_t N = y.dim(0);
    const Matrix ym = y.as_matrix(N);
    const auto n_cells = static_cast<double>(y.size());
    Matrix mean_pred = Matrix::Zero(ym.rows(), ym.cols());
    double dbar = 0.0, mean_s2 = 0.0;
    for (std::size_t t = 0; t < draws.size(); ++t) {
        const DenseTensor pred = predict(x, draws.factors[t], draws.centering);
        const Matrix pm = pred.as_matrix(N);
        dbar += gaussian_deviance((ym - pm).squaredNorm(), n_cells, draws.sigma2[t]);
        mean_pred += pm;
        mean_s2 += draws.sigma2[t];
    }
    const auto T = static_cast<double>(draws.size());
    dbar /= T;
    mean_pred /= T;
    mean_s2 /= T;
    const double d_at_mean = gaussian_deviance((ym - mean_pred).squaredNorm(), n_cells, mean_s2);
    return 2.0 * dbar - d_at_mean;
}

} // namespace mwr
