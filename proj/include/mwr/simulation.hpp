#pragma once

#include "mwr/inference.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace mwr {

enum class Correlation { none, corr_x, corr_e };

inline const char* to_string(Correlation c) {
    switch (c) {
    case Correlation::corr_x: return "corr_X";
    case Correlation::corr_e: return "corr_E";
    default: return "none";
    }
}

inline Correlation parse_correlation(const std::string& s) {
    if (s == "none") return Correlation::none;
    if (s == "corr_X" || s == "corr_x") return Correlation::corr_x;
    if (s == "corr_E" || s == "corr_e") return Correlation::corr_e;
    throw InvalidArgument("unknown correlation '" + s + "' (expected none, corr_X or corr_E)");
}

/// One simulated scenario.
struct SimSpec {
    std::size_t n = 120;
    Dims in_dims{15, 20};
    Dims out_dims{5, 10};
    std::size_t rank = 1;  ///< 0 means no signal
    double snr = 1.0;
    std::uint64_t seed = 0;
    Correlation correlation = Correlation::none;
    double rho = 0.6;

    void validate() const {
        if (n < 1) throw InvalidArgument("simulation: N must be at least 1");
        if (in_dims.empty()) throw InvalidArgument("simulation: at least one predictor dimension is required");
        for (std::size_t d : in_dims)
            if (d == 0) throw InvalidArgument("simulation: predictor dims must be positive");
        for (std::size_t d : out_dims)
            if (d == 0) throw InvalidArgument("simulation: outcome dims must be positive");
        if (rank > 0 && !(snr > 0 && std::isfinite(snr))) throw InvalidArgument("simulation: snr must be > 0");
        if (correlation != Correlation::none && !(rho > 0 && rho < 1))
            throw InvalidArgument("simulation: rho must lie in (0, 1), got " + std::to_string(rho));
    }
};

struct SimData {
    DenseTensor x;
    DenseTensor y;
    CpCoefficients truth;  ///< rank-1 zeros when the true rank is 0
};

/// Zero-mean, unit-variance Gaussian fields on an integer grid with
/// Corr(d) = exp(-d / phi), phi = -1 / ln(rho), d the Euclidean distance.
/// Adjacent cells therefore have correlation exactly rho.
class CorrelatedFieldSampler {
public:
    CorrelatedFieldSampler(Dims grid, double rho) : grid_(std::move(grid)) {
        if (!(rho > 0 && rho < 1)) throw InvalidArgument("correlated field: rho must lie in (0, 1)");
        if (grid_.empty()) throw InvalidArgument("correlated field: empty grid");
        const auto n = static_cast<Eigen::Index>(product(grid_));
        const double phi = -1.0 / std::log(rho);
        Matrix cov(n, n);
        std::vector<std::vector<double>> coords(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            std::size_t rest = static_cast<std::size_t>(i);
            for (std::size_t d : grid_) {
                coords[static_cast<std::size_t>(i)].push_back(static_cast<double>(rest % d));
                rest /= d;
            }
        }
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                double d2 = 0;
                for (std::size_t k = 0; k < grid_.size(); ++k) {
                    const double diff = coords[static_cast<std::size_t>(i)][k] - coords[static_cast<std::size_t>(j)][k];
                    d2 += diff * diff;
                }
                cov(i, j) = std::exp(-std::sqrt(d2) / phi);
            }
        Eigen::LLT<Matrix> llt(cov);
        if (llt.info() != Eigen::Success) throw NumericalError("correlated field: covariance is not positive definite");
        chol_ = llt.matrixL();
        cov_ = std::move(cov);
    }

    [[nodiscard]] const Matrix& covariance() const { return cov_; }
    [[nodiscard]] const Dims& grid() const { return grid_; }

    /// n fields stacked along a leading observation mode: dims (n, grid...).
    [[nodiscard]] DenseTensor draw(std::size_t n, Rng& rng) const {
        const Matrix z = standard_normal_matrix(static_cast<Eigen::Index>(n), chol_.rows(), rng);
        const Matrix f = z * chol_.transpose();
        Dims dims{n};
        dims.insert(dims.end(), grid_.begin(), grid_.end());
        return DenseTensor(std::move(dims), std::vector<double>(f.data(), f.data() + f.size()));
    }

private:
    Dims grid_;
    Matrix cov_;
    Matrix chol_;
};

/// A single field on the grid.
inline DenseTensor correlated_field(const Dims& grid, double rho, Rng& rng) {
    const DenseTensor t = CorrelatedFieldSampler(grid, rho).draw(1, rng);
    return DenseTensor(grid, std::vector<double>(t.values().begin(), t.values().end()));
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    return splitmix64(h ^ splitmix64(v));
}

inline DenseTensor noise(std::size_t n, const Dims& dims, bool correlated, double rho, Rng& rng) {
    if (correlated) return CorrelatedFieldSampler(dims, rho).draw(n, rng);
    Dims d{n};
    d.insert(d.end(), dims.begin(), dims.end());
    return standard_normal_tensor(d, rng);
}

} // namespace detail

/// Draw X, the factors and E (in that order), then scale B so that
/// ||<X,B>||^2 / ||E||^2 equals the requested SNR exactly.
inline SimData simulate(const SimSpec& spec) {
    spec.validate();
    Rng rng = make_rng(spec.seed);
    for (int attempt = 0; attempt < 3; ++attempt) {
        SimData out;
        out.x = detail::noise(spec.n, spec.in_dims, spec.correlation == Correlation::corr_x, spec.rho, rng);
        if (spec.rank == 0) {
            out.truth = CpCoefficients::zeros(spec.in_dims, spec.out_dims, 1);
            out.y = detail::noise(spec.n, spec.out_dims, spec.correlation == Correlation::corr_e && !spec.out_dims.empty(),
                                  spec.rho, rng);
            return out;
        }
        CpCoefficients b = random_cp(spec.in_dims, spec.out_dims, spec.rank, rng);
        const DenseTensor e = detail::noise(spec.n, spec.out_dims,
                                            spec.correlation == Correlation::corr_e && !spec.out_dims.empty(), spec.rho, rng);
        DenseTensor signal = predict_centered(out.x, b);
        const double s2 = squared_norm(signal);
        if (!(s2 > 0)) continue;
        const double c = std::sqrt(spec.snr * squared_norm(e) / s2);
        b.set_factor(0, c * b.factor(0));
        signal *= c;
        out.truth = std::move(b);
        out.y = signal;
        out.y += e;
        return out;
    }
    throw NumericalError("simulate: the generated signal <X, B> was identically zero in 3 attempts");
}

/// Fresh (X, Y) from a fixed coefficient array with the scenario's noise model.
inline SimData simulate_test(const SimSpec& spec, const CpCoefficients& truth, std::size_t n, Rng& rng) {
    SimData out;
    out.truth = truth;
    out.x = detail::noise(n, spec.in_dims, spec.correlation == Correlation::corr_x, spec.rho, rng);
    out.y = detail::noise(n, spec.out_dims, spec.correlation == Correlation::corr_e && !spec.out_dims.empty(), spec.rho,
                          rng);
    if (spec.rank > 0) out.y += predict_centered(out.x, truth);
    return out;
}

/// ||Y_new - Y_hat||^2 / ||Y_new||^2.
inline double rpe(const DenseTensor& y_new, const DenseTensor& y_hat) {
    if (y_new.dims() != y_hat.dims())
        throw ShapeError("rpe: dims " + format_dims(y_new.dims()) + " and " + format_dims(y_hat.dims()) + " differ");
    const double denom = squared_norm(y_new);
    if (!(denom > 0)) throw DataError("rpe: held-out responses have zero norm");
    DenseTensor r = y_new;
    r -= y_hat;
    return squared_norm(r) / denom;
}

/// One estimation setting applied to replicated datasets of one scenario.
struct CellSpec {
    SimSpec scenario;
    std::size_t rank_hat = 1;
    double lambda = 0.0;
    std::size_t replicates = 10;
    std::size_t test_n = 500;
    std::size_t gibbs_samples = 1000;  ///< 0 skips sampling (no coverage metrics)
    double level = 0.95;
    std::size_t max_iters = 500;
};

struct ReplicateResult {
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    double rpe = std::numeric_limits<double>::quiet_NaN();
    double coverage = std::numeric_limits<double>::quiet_NaN();
    double length = std::numeric_limits<double>::quiet_NaN();  ///< mean interval length / sd(Y_new)
    bool converged = false;
    std::string error;

    [[nodiscard]] bool ok() const { return error.empty(); }
};

struct MeanSe {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentCell {
    CellSpec spec;
    std::vector<ReplicateResult> replicates;
    MeanSe rpe;
    MeanSe coverage;
    MeanSe length;
    std::size_t n_ok = 0;
};

/// Dataset seed for one replicate of a scenario; independent of the
/// estimation setting so every (R-hat, lambda) sees the same data.
inline std::uint64_t replicate_seed(const SimSpec& s, std::size_t replicate) {
    std::uint64_t h = detail::splitmix64(s.seed);
    h = detail::mix(h, s.n);
    h = detail::mix(h, s.rank);
    std::uint64_t snr_bits = 0;
    static_assert(sizeof(double) == sizeof(std::uint64_t));
    std::memcpy(&snr_bits, &s.snr, sizeof snr_bits);
    h = detail::mix(h, snr_bits);
    h = detail::mix(h, static_cast<std::uint64_t>(s.correlation));
    for (std::size_t d : s.in_dims) h = detail::mix(h, d);
    h = detail::mix(h, 0xffff);
    for (std::size_t d : s.out_dims) h = detail::mix(h, d);
    return detail::mix(h, replicate);
}

namespace detail {

inline MeanSe mean_se(const std::vector<double>& v) {
    MeanSe out;
    if (v.empty()) return out;
    double s = 0;
    for (double x : v) s += x;
    out.mean = s / static_cast<double>(v.size());
    if (v.size() < 2) return out;
    double ss = 0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    return out;
}

inline double population_sd(const DenseTensor& t) {
    const Vector v = vec(t);
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().mean());
}

} // namespace detail

/// Simulate, fit, score on a fresh test set and (optionally) sample the
/// posterior for one replicate.
inline ReplicateResult run_replicate(const CellSpec& cell, std::size_t replicate) {
    ReplicateResult out;
    out.replicate = replicate;
    SimSpec s = cell.scenario;
    s.seed = replicate_seed(cell.scenario, replicate);
    out.seed = s.seed;
    try {
        const SimData train = simulate(s);
        Rng test_rng = make_rng(s.seed, 1);
        const SimData test = simulate_test(s, train.truth, cell.test_n, test_rng);
        FitConfig fc;
        fc.rank = cell.rank_hat;
        fc.lambda = cell.lambda;
        fc.seed = s.seed;
        fc.max_iters = cell.max_iters;
        const FitResult f = fit(train.x, train.y, fc);
        out.converged = f.converged;
        out.rpe = rpe(test.y, predict(test.x, f));
        if (cell.gibbs_samples > 0) {
            GibbsConfig gc;
            gc.rank = cell.rank_hat;
            gc.lambda = cell.lambda;
            gc.n_samples = cell.gibbs_samples;
            gc.seed = s.seed;
            gc.credible_level = cell.level;
            const PosteriorDraws d = gibbs(train.x, train.y, f, gc);
            Rng pred_rng = make_rng(s.seed, 2);
            const CredibleIntervals ci = predictive_intervals(test.x, d, cell.level, pred_rng);
            std::size_t hit = 0;
            double len = 0;
            for (std::size_t i = 0; i < test.y.size(); ++i) {
                if (test.y[i] >= ci.lower[i] && test.y[i] <= ci.upper[i]) ++hit;
                len += ci.upper[i] - ci.lower[i];
            }
            const auto cells = static_cast<double>(test.y.size());
            out.coverage = static_cast<double>(hit) / cells;
            out.length = len / cells / detail::population_sd(test.y);
        }
    } catch (const Error& e) {
        out.error = e.what();
    }
    return out;
}

inline ExperimentCell summarize(const CellSpec& spec, std::vector<ReplicateResult> reps) {
    ExperimentCell cell;
    cell.spec = spec;
    std::vector<double> r, c, l;
    for (const auto& rep : reps) {
        if (!rep.ok()) continue;
        ++cell.n_ok;
        r.push_back(rep.rpe);
        if (!std::isnan(rep.coverage)) {
            c.push_back(rep.coverage);
            l.push_back(rep.length);
        }
    }
    cell.rpe = detail::mean_se(r);
    cell.coverage = detail::mean_se(c);
    cell.length = detail::mean_se(l);
    cell.replicates = std::move(reps);
    return cell;
}

inline ExperimentCell run_cell(const CellSpec& spec) {
    std::vector<ReplicateResult> reps;
    for (std::size_t i = 0; i < spec.replicates; ++i) reps.push_back(run_replicate(spec, i));
    return summarize(spec, std::move(reps));
}

/// Evaluate independent cells on up to `parallelism` threads. Results keep
/// the input order; per-replicate failures are recorded, not thrown.
inline std::vector<ExperimentCell> run_grid(const std::vector<CellSpec>& cells, std::size_t parallelism = 1) {
    std::vector<ExperimentCell> out(cells.size());
    if (cells.empty()) return out;
    parallelism = std::max<std::size_t>(1, std::min(parallelism, cells.size()));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) out[i] = run_cell(cells[i]);
    };
    if (parallelism == 1) {
        worker();
        return out;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < parallelism; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return out;
}

/// Fully crossed design: scenarios (true rank x N x SNR) crossed with
/// estimation settings (R-hat x lambda).
struct GridSpec {
    std::vector<std::size_t> ranks{0, 1, 2, 3, 4, 5};
    std::vector<std::size_t> ns{30, 120};
    std::vector<double> snrs{1.0, 5.0};
    std::vector<std::size_t> rank_hats{1, 2, 3, 4, 5};
    std::vector<double> lambdas{0.0, 0.5, 1.0, 5.0, 50.0};
    std::size_t replicates = 10;
    Dims in_dims{15, 20};
    Dims out_dims{5, 10};
    std::size_t test_n = 500;
    std::size_t gibbs_samples = 1000;
    double level = 0.95;
    Correlation correlation = Correlation::none;
    double rho = 0.6;
    std::uint64_t seed = 0;
    /// Only fit R-hat equal to the true rank (as for the regularization table).
    bool matched_rank_only = false;
};

inline std::vector<CellSpec> expand_grid(const GridSpec& g) {
    std::vector<CellSpec> cells;
    for (std::size_t r : g.ranks)
        for (std::size_t n : g.ns)
            for (double snr : g.snrs)
                for (std::size_t rh : g.rank_hats) {
                    if (g.matched_rank_only && rh != r) continue;
                    for (double lam : g.lambdas) {
                        CellSpec c;
                        c.scenario.n = n;
                        c.scenario.in_dims = g.in_dims;
                        c.scenario.out_dims = g.out_dims;
                        c.scenario.rank = r;
                        c.scenario.snr = snr;
                        c.scenario.seed = g.seed;
                        c.scenario.correlation = g.correlation;
                        c.scenario.rho = g.rho;
                        c.scenario.validate();
                        c.rank_hat = rh;
                        c.lambda = lam;
                        c.replicates = g.replicates;
                        c.test_n = g.test_n;
                        c.gibbs_samples = g.gibbs_samples;
                        c.level = g.level;
                        cells.push_back(c);
                    }
                }
    return cells;
}

namespace detail {

inline std::string join_dims(const Dims& d) {
    std::string s;
    for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "x" : "") + std::to_string(d[i]);
    return s.empty() ? "1" : s;
}

inline std::string num(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace detail

/// One row per replicate plus one aggregate row per cell.
inline void write_results_csv(std::ostream& os, const std::vector<ExperimentCell>& cells) {
    os << "kind,n,in_dims,out_dims,true_rank,snr,correlation,rho,rank_hat,lambda,replicate,"
          "rpe,rpe_se,coverage,coverage_se,length,length_se,n_ok,error\n";
    for (const auto& c : cells) {
        const SimSpec& s = c.spec.scenario;
        auto prefix = [&](const char* kind) {
            os << kind << ',' << s.n << ',' << detail::join_dims(s.in_dims) << ',' << detail::join_dims(s.out_dims) << ','
               << s.rank << ',' << detail::num(s.snr) << ',' << to_string(s.correlation) << ',' << detail::num(s.rho)
               << ',' << c.spec.rank_hat << ',' << detail::num(c.spec.lambda) << ',';
        };
        for (const auto& r : c.replicates) {
            prefix("replicate");
            os << r.replicate << ',' << detail::num(r.rpe) << ",NA," << detail::num(r.coverage) << ",NA,"
               << detail::num(r.length) << ",NA," << (r.ok() ? 1 : 0) << ',' << detail::csv_quote(r.error) << '\n';
        }
        prefix("aggregate");
        os << "NA," << detail::num(c.rpe.mean) << ',' << detail::num(c.rpe.se) << ',' << detail::num(c.coverage.mean)
           << ',' << detail::num(c.coverage.se) << ',' << detail::num(c.length.mean) << ','
           << detail::num(c.length.se) << ',' << c.n_ok << ",\n";
    }
}

} // namespace mwr
