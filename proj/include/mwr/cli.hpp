#pragma once

#include "mwr/io.hpp"
#include "mwr/simulation.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

namespace mwr::cli {

namespace detail {

inline std::string fmt(double v, const char* spec = "%.17g") {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

inline std::vector<std::string> split(const std::string& s, const std::string& seps) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (seps.find(c) != std::string::npos) {
            out.push_back(io::detail::trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(io::detail::trim(cur));
    if (out.size() == 1 && out.front().empty()) out.clear();
    return out;
}

inline std::size_t to_size(const std::string& key, const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw InvalidArgument(key + ": expected a non-negative integer, got '" + s + "'");
    return static_cast<std::size_t>(std::stoull(s));
}

inline double to_double(const std::string& key, const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
        throw InvalidArgument(key + ": expected a finite number, got '" + s + "'");
    return v;
}

inline bool to_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s.empty()) return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw InvalidArgument(key + ": expected true or false, got '" + s + "'");
}

/// "15,20" or "15x20"; "none" or "" is the empty list (scalar response).
inline Dims to_dims(const std::string& key, const std::string& s) {
    if (s == "none") return {};
    Dims d;
    for (const auto& t : split(s, ",x")) d.push_back(to_size(key, t));
    return d;
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& s) {
    std::vector<std::size_t> v;
    for (const auto& t : split(s, ",")) v.push_back(to_size(key, t));
    return v;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& s) {
    std::vector<double> v;
    for (const auto& t : split(s, ",")) v.push_back(to_double(key, t));
    return v;
}

/// Observations `idx` of t along mode 1.
inline DenseTensor select_rows(const DenseTensor& t, const std::vector<std::size_t>& idx) {
    const std::size_t N = t.dim(0);
    const Matrix m = t.as_matrix(N);
    Matrix s(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) s.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
    Dims d = t.dims();
    d[0] = idx.size();
    return DenseTensor(d, std::vector<double>(s.data(), s.data() + s.size()));
}

inline void check_seed_env(std::uint64_t& seed, bool given) {
    if (given) return;
    if (const char* env = std::getenv("MWR_SEED"); env && *env) seed = to_size("MWR_SEED", env);
}

inline GridSpec parse_grid(const std::vector<std::pair<std::string, std::string>>& kv) {
    GridSpec g;
    for (const auto& [k, v] : kv) {
        if (k == "ranks") g.ranks = to_sizes(k, v);
        else if (k == "ns") g.ns = to_sizes(k, v);
        else if (k == "snrs") g.snrs = to_doubles(k, v);
        else if (k == "rank-hats") g.rank_hats = to_sizes(k, v);
        else if (k == "lambdas") g.lambdas = to_doubles(k, v);
        else if (k == "replicates") g.replicates = to_size(k, v);
        else if (k == "in-dims") g.in_dims = to_dims(k, v);
        else if (k == "out-dims") g.out_dims = to_dims(k, v);
        else if (k == "test-n") g.test_n = to_size(k, v);
        else if (k == "gibbs-samples") g.gibbs_samples = to_size(k, v);
        else if (k == "level") g.level = to_double(k, v);
        else if (k == "correlation") g.correlation = parse_correlation(v);
        else if (k == "rho") g.rho = to_double(k, v);
        else if (k == "seed") g.seed = to_size(k, v);
        else if (k == "matched-rank-only") g.matched_rank_only = to_bool(k, v);
        else throw InvalidArgument("grid file: unknown key '" + k + "'");
    }
    if (g.replicates < 1) throw InvalidArgument("grid file: replicates must be at least 1");
    if (!(g.level > 0 && g.level < 1)) throw InvalidArgument("grid file: level must be in (0, 1)");
    for (std::size_t rh : g.rank_hats)
        if (rh < 1) throw InvalidArgument("grid file: rank-hats must be at least 1");
    for (double l : g.lambdas)
        if (l < 0) throw InvalidArgument("grid file: lambdas must be >= 0");
    return g;
}

inline void check_rank(std::size_t rank) {
    if (rank < 1) throw InvalidArgument("--rank must be at least 1 (got 0)");
}

inline void check_lambda(double lambda) {
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw InvalidArgument("--lambda must be finite and >= 0");
}

} // namespace detail

/// Shared ALS flags.
struct FitFlags {
    std::string x, y;
    std::size_t rank = 1;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::size_t max_iters = 500;
    double tol = 1e-8;
    std::size_t anneal_steps = 10;
    bool no_center = false;
    std::size_t restarts = 1;

    void add(CLI::App* app, bool with_data = true) {
        if (with_data) {
            app->add_option("--x", x, "predictor tensor file (mode 1 = observations)")->required();
            app->add_option("--y", y, "response tensor file (mode 1 = observations)")->required();
        }
        app->add_option("--rank", rank, "CP rank R (>= 1)")->required();
        app->add_option("--lambda", lambda, "ridge penalty (>= 0)")->capture_default_str();
        app->add_option("--seed", seed, "random seed (default: $MWR_SEED or 0)");
        app->add_option("--max-iters", max_iters, "maximum ALS sweeps")->capture_default_str();
        app->add_option("--tol", tol, "relative objective tolerance")->capture_default_str();
        app->add_option("--anneal-steps", anneal_steps, "tempered-penalty sweeps")->capture_default_str();
        app->add_flag("--no-center", no_center, "do not center X and Y");
        app->add_option("--restarts", restarts, "random starts (best objective kept)")->capture_default_str();
    }

    [[nodiscard]] FitConfig config(CLI::App* app) {
        detail::check_rank(rank);
        detail::check_lambda(lambda);
        if (restarts < 1) throw InvalidArgument("--restarts must be at least 1");
        if (!(tol >= 0)) throw InvalidArgument("--tol must be >= 0");
        detail::check_seed_env(seed, app->count("--seed") > 0);
        FitConfig c;
        c.rank = rank;
        c.lambda = lambda;
        c.seed = seed;
        c.max_iters = max_iters;
        c.rel_tol = tol;
        c.anneal_steps = anneal_steps;
        c.center_data = !no_center;
        c.n_starts = restarts;
        return c;
    }
};

struct Context {
    std::ostream& out;
    std::ostream& err;
};

// ---------------------------------------------------------------------------
// commands

inline int cmd_fit(FitFlags& f, const std::string& model_path, CLI::App* app, Context& ctx) {
    const FitConfig cfg = f.config(app);
    const DenseTensor x = io::load_tensor(f.x);
    const DenseTensor y = io::load_tensor(f.y);
    const FitResult r = fit(x, y, cfg);
    io::save_model(model_path, io::Model::from_fit(r));
    ctx.out << "objective " << detail::fmt(r.objective) << '\n'
            << "iterations " << r.iterations << '\n'
            << "converged " << (r.converged ? "true" : "false") << '\n'
            << "model " << model_path << '\n';
    return 0;
}

inline int cmd_predict(const std::string& model_path, const std::string& x_path, const std::string& out_path,
                       Context& ctx) {
    const io::Model m = io::load_model(model_path);
    const DenseTensor x = io::load_tensor(x_path);
    const DenseTensor yhat = predict(x, m.coefficients, m.centering);
    io::save_tensor(out_path, yhat);
    ctx.out << "predictions " << format_dims(yhat.dims()) << " written to " << out_path << '\n';
    return 0;
}

struct GibbsFlags {
    std::size_t samples = 1000;
    std::size_t burn_in = 0;
    std::size_t thin = 1;
    double level = 0.95;
    std::string out = "draws.json";
    std::string x_new, y_new;
    std::string intervals_prefix = "intervals";
    bool dic = false;
    bool normalize = false;
};

inline int cmd_gibbs(FitFlags& f, GibbsFlags& g, CLI::App* app, Context& ctx) {
    const FitConfig fc = f.config(app);
    GibbsConfig gc;
    gc.rank = fc.rank;
    gc.lambda = fc.lambda;
    gc.seed = fc.seed;
    gc.n_samples = g.samples;
    gc.burn_in = g.burn_in;
    gc.thin = g.thin;
    gc.credible_level = g.level;
    gc.normalize_draws = g.normalize;
    gc.validate();
    if (!g.y_new.empty() && g.x_new.empty()) throw InvalidArgument("--y-new requires --x-new");

    const DenseTensor x = io::load_tensor(f.x);
    const DenseTensor y = io::load_tensor(f.y);
    const FitResult mode = fit(x, y, fc);
    const PosteriorDraws d = gibbs(x, y, mode, gc);
    io::save_draws(g.out, d);

    double s2 = 0;
    for (double v : d.sigma2) s2 += v;
    ctx.out << "samples " << d.size() << '\n'
            << "mode_objective " << detail::fmt(mode.objective) << '\n'
            << "sigma2_mean " << detail::fmt(s2 / static_cast<double>(d.size())) << '\n';
    if (g.dic) ctx.out << "dic " << detail::fmt(dic(x, y, d)) << '\n';

    if (!g.x_new.empty()) {
        const DenseTensor xn = io::load_tensor(g.x_new);
        Rng rng = make_rng(fc.seed, 2);
        const CredibleIntervals ci = predictive_intervals(xn, d, g.level, rng);
        io::save_tensor(g.intervals_prefix + "_lower.mwt", ci.lower);
        io::save_tensor(g.intervals_prefix + "_upper.mwt", ci.upper);
        ctx.out << "intervals " << g.intervals_prefix << "_lower.mwt " << g.intervals_prefix << "_upper.mwt\n";
        if (!g.y_new.empty()) {
            const DenseTensor yn = io::load_tensor(g.y_new);
            if (yn.dims() != ci.lower.dims())
                throw ShapeError("--y-new dims " + format_dims(yn.dims()) + " differ from predictions " +
                                 format_dims(ci.lower.dims()));
            std::size_t hit = 0;
            double len = 0;
            for (std::size_t i = 0; i < yn.size(); ++i) {
                hit += yn[i] >= ci.lower[i] && yn[i] <= ci.upper[i];
                len += ci.upper[i] - ci.lower[i];
            }
            const auto n = static_cast<double>(yn.size());
            ctx.out << "coverage " << detail::fmt(static_cast<double>(hit) / n, "%.4f") << '\n'
                    << "relative_length " << detail::fmt(len / n / mwr::detail::population_sd(yn), "%.4f") << '\n';
        }
    }
    ctx.out << "draws " << g.out << '\n';
    return 0;
}

struct CvRow {
    std::size_t rank;
    double lambda;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
    std::size_t failed = 0;
};

/// Index of the selected row: minimal mean RPE, where rows within 1e-9 of
/// the minimum count as ties and go to the smaller rank, then the larger lambda.
inline std::size_t select_cv(const std::vector<CvRow>& rows) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : rows)
        if (!std::isnan(r.mean)) best = std::min(best, r.mean);
    std::size_t pick = rows.size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const CvRow& r = rows[i];
        if (std::isnan(r.mean) || r.mean > best + 1e-9) continue;
        if (pick == rows.size() || r.rank < rows[pick].rank ||
            (r.rank == rows[pick].rank && r.lambda > rows[pick].lambda))
            pick = i;
    }
    return pick;
}

inline std::vector<CvRow> cross_validate(const DenseTensor& x, const DenseTensor& y, const std::vector<std::size_t>& ranks,
                                         const std::vector<double>& lambdas, std::size_t folds, const FitConfig& base) {
    mwr::detail::check_pair(x, y);
    const std::size_t N = x.dim(0);
    if (folds < 2) throw InvalidArgument("--folds must be at least 2");
    if (folds > N)
        throw InvalidArgument("--folds " + std::to_string(folds) + " exceeds the number of observations " + std::to_string(N));
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_rng(base.seed, 3);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> test(folds), train(folds);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < folds; ++k) (i % folds == k ? test[k] : train[k]).push_back(perm[i]);
    for (auto& v : test) std::sort(v.begin(), v.end());
    for (auto& v : train) std::sort(v.begin(), v.end());

    std::vector<CvRow> rows;
    for (std::size_t r : ranks)
        for (double lam : lambdas) {
            CvRow row{r, lam};
            std::vector<double> scores;
            for (std::size_t k = 0; k < folds; ++k) {
                FitConfig c = base;
                c.rank = r;
                c.lambda = lam;
                try {
                    const FitResult f = fit(detail::select_rows(x, train[k]), detail::select_rows(y, train[k]), c);
                    const DenseTensor xt = detail::select_rows(x, test[k]);
                    scores.push_back(rpe(detail::select_rows(y, test[k]), predict(xt, f)));
                } catch (const NumericalError&) {
                    ++row.failed;
                }
            }
            if (row.failed == 0) {
                const MeanSe m = mwr::detail::mean_se(scores);
                row.mean = m.mean;
                row.se = m.se;
            }
            rows.push_back(row);
        }
    return rows;
}

inline int cmd_cv(FitFlags& f, const std::string& ranks_s, const std::string& lambdas_s, std::size_t folds,
                  const std::string& csv, CLI::App* app, Context& ctx) {
    const std::vector<std::size_t> ranks = detail::to_sizes("--ranks", ranks_s);
    const std::vector<double> lambdas = detail::to_doubles("--lambdas", lambdas_s);
    if (ranks.empty() || lambdas.empty()) throw InvalidArgument("--ranks and --lambdas need at least one value");
    for (std::size_t r : ranks) detail::check_rank(r);
    for (double l : lambdas) detail::check_lambda(l);
    f.rank = ranks.front();
    const FitConfig base = f.config(app);
    const DenseTensor x = io::load_tensor(f.x);
    const DenseTensor y = io::load_tensor(f.y);
    const std::vector<CvRow> rows = cross_validate(x, y, ranks, lambdas, folds, base);
    const std::size_t pick = select_cv(rows);

    std::ofstream file;
    if (!csv.empty()) {
        file = io::detail::open_out(csv);
        file << "rank,lambda,mean_rpe,se,failed_folds,selected\n";
    }
    ctx.out << "rank lambda mean_rpe se failed_folds selected\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const CvRow& r = rows[i];
        const char* mark = i == pick ? "*" : "";
        ctx.out << r.rank << ' ' << detail::fmt(r.lambda, "%g") << ' ' << detail::fmt(r.mean, "%.6g") << ' '
                << detail::fmt(r.se, "%.3g") << ' ' << r.failed << ' ' << mark << '\n';
        if (file.is_open())
            file << r.rank << ',' << detail::fmt(r.lambda, "%g") << ',' << detail::fmt(r.mean) << ','
                 << detail::fmt(r.se) << ',' << r.failed << ',' << (i == pick ? 1 : 0) << '\n';
    }
    if (pick == rows.size()) {
        ctx.err << "cv: every candidate failed\n";
        return 3;
    }
    ctx.out << "selected rank " << rows[pick].rank << " lambda " << detail::fmt(rows[pick].lambda, "%g") << '\n';
    return 0;
}

struct SimFlags {
    std::size_t n = 120;
    std::string in_dims = "15,20", out_dims = "5,10";
    std::size_t rank = 1;
    double snr = 1.0;
    std::uint64_t seed = 0;
    std::string correlation = "none";
    double rho = 0.6;
    std::size_t test_n = 0;
    std::string out_prefix;
};

inline int cmd_simulate(SimFlags& s, CLI::App* app, Context& ctx) {
    SimSpec spec;
    spec.n = s.n;
    spec.in_dims = detail::to_dims("--in-dims", s.in_dims);
    spec.out_dims = detail::to_dims("--out-dims", s.out_dims);
    spec.rank = s.rank;
    spec.snr = s.snr;
    spec.seed = s.seed;
    detail::check_seed_env(spec.seed, app->count("--seed") > 0);
    spec.correlation = parse_correlation(s.correlation);
    spec.rho = s.rho;
    if (spec.correlation == Correlation::none && !(s.rho > 0 && s.rho < 1) && app->count("--rho") > 0)
        throw InvalidArgument("simulation: rho must lie in (0, 1), got " + detail::fmt(s.rho, "%g"));
    spec.validate();
    const SimData d = simulate(spec);
    io::save_tensor(s.out_prefix + "_x.mwt", d.x);
    io::save_tensor(s.out_prefix + "_y.mwt", d.y);
    io::save_tensor(s.out_prefix + "_b.mwt", materialize(d.truth));
    if (s.test_n > 0) {
        Rng rng = make_rng(spec.seed, 1);
        const SimData t = simulate_test(spec, d.truth, s.test_n, rng);
        io::save_tensor(s.out_prefix + "_xtest.mwt", t.x);
        io::save_tensor(s.out_prefix + "_ytest.mwt", t.y);
        ctx.out << "test " << format_dims(t.y.dims()) << " -> " << s.out_prefix << "_xtest.mwt " << s.out_prefix
                << "_ytest.mwt\n";
    }
    ctx.out << "x " << format_dims(d.x.dims()) << " -> " << s.out_prefix << "_x.mwt\n"
            << "y " << format_dims(d.y.dims()) << " -> " << s.out_prefix << "_y.mwt\n"
            << "b rank " << spec.rank << " -> " << s.out_prefix << "_b.mwt\n"
            << "correlation " << to_string(spec.correlation) << '\n';
    return 0;
}

inline int cmd_experiment(const std::string& grid_path, const std::string& csv, std::size_t parallel, bool dry_run,
                          Context& ctx) {
    const GridSpec g = detail::parse_grid(io::load_key_values(grid_path));
    const std::vector<CellSpec> cells = expand_grid(g);
    const std::size_t datasets = g.ranks.size() * g.ns.size() * g.snrs.size() * g.replicates;
    ctx.out << "cells " << cells.size() << '\n'
            << "datasets " << datasets << '\n'
            << "replicate_rows " << cells.size() * g.replicates << '\n';
    if (dry_run) return 0;
    if (csv.empty()) throw InvalidArgument("experiment: --out is required unless --dry-run is given");
    const std::vector<ExperimentCell> res = run_grid(cells, std::max<std::size_t>(parallel, 1));
    std::ofstream out = io::detail::open_out(csv);
    write_results_csv(out, res);
    if (!out) throw IoError("failed writing '" + csv + "'");
    std::size_t failures = 0;
    for (const auto& c : res) failures += c.replicates.size() - c.n_ok;
    ctx.out << "failed_replicates " << failures << '\n' << "results " << csv << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// config splicing

namespace detail {

inline bool user_gave(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Pull `--<name> FILE` / `--<name>=FILE` out of args.
inline std::string take_option(std::vector<std::string>& args, const std::string& name) {
    const std::string flag = "--" + name;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == flag) {
            if (i + 1 >= args.size()) throw InvalidArgument(flag + " requires a file argument");
            std::string v = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            return v;
        }
        if (args[i].rfind(flag + "=", 0) == 0) {
            std::string v = args[i].substr(flag.size() + 1);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            return v;
        }
    }
    return {};
}

/// Insert key=value pairs as flags right after the subcommand; keys the user
/// passed explicitly are skipped so flags win.
inline void splice(std::vector<std::string>& args, const std::vector<std::pair<std::string, std::string>>& kv,
                   CLI::App& app, const std::string& src) {
    if (args.empty()) throw InvalidArgument(src + " given without a command");
    CLI::App* sub = app.get_subcommand_no_throw(args.front());
    if (sub == nullptr) throw InvalidArgument("unknown command '" + args.front() + "'");
    std::vector<std::string> extra;
    for (const auto& [k, v] : kv) {
        const std::string flag = "--" + k;
        if (sub->get_option_no_throw(flag) == nullptr) {
            bool elsewhere = false;
            for (const CLI::App* s : app.get_subcommands({})) elsewhere |= s->get_option_no_throw(flag) != nullptr;
            if (!elsewhere) throw InvalidArgument(src + ": unknown key '" + k + "'");
            continue;  // shared config file, key belongs to another command
        }
        if (user_gave(args, flag)) continue;
        extra.push_back(v.empty() ? flag : flag + "=" + v);
    }
    args.insert(args.begin() + 1, extra.begin(), extra.end());
}

} // namespace detail

/// Runs one command line (without the program name) and returns the exit
/// code: 0 success, 1 usage, 2 data or shape, 3 numerical failure.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multiway ridge regression: CP-structured tensor-on-tensor regression", "mwr"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mwr 1.0");
    Context ctx{out, err};

    FitFlags fit_f, gibbs_f, cv_f;
    std::string model_out = "model.json";
    CLI::App* fit_cmd = app.add_subcommand("fit", "fit a CP ridge regression and write a model file");
    fit_f.add(fit_cmd);
    fit_cmd->add_option("--out", model_out, "model file to write")->capture_default_str();

    std::string model_in, px, pout;
    CLI::App* pred_cmd = app.add_subcommand("predict", "predict responses from a model file");
    pred_cmd->add_option("--model", model_in, "model file")->required();
    pred_cmd->add_option("--x", px, "predictor tensor file")->required();
    pred_cmd->add_option("--out", pout, "prediction tensor file")->required();

    GibbsFlags gf;
    CLI::App* gibbs_cmd = app.add_subcommand("gibbs", "sample the posterior starting at the penalized fit");
    gibbs_f.add(gibbs_cmd);
    gibbs_cmd->add_option("--samples", gf.samples, "retained draws T")->capture_default_str();
    gibbs_cmd->add_option("--burn-in", gf.burn_in, "discarded initial sweeps")->capture_default_str();
    gibbs_cmd->add_option("--thin", gf.thin, "keep every k-th sweep")->capture_default_str();
    gibbs_cmd->add_option("--level", gf.level, "credible level")->capture_default_str();
    gibbs_cmd->add_option("--out", gf.out, "draws file to write")->capture_default_str();
    gibbs_cmd->add_option("--x-new", gf.x_new, "predictors for posterior predictive intervals");
    gibbs_cmd->add_option("--y-new", gf.y_new, "held-out responses for interval coverage");
    gibbs_cmd->add_option("--intervals-prefix", gf.intervals_prefix, "interval output prefix")->capture_default_str();
    gibbs_cmd->add_flag("--dic", gf.dic, "report DIC on the training data");
    gibbs_cmd->add_flag("--normalize", gf.normalize, "store identifiability-normalized draws");

    std::string ranks_s, lambdas_s, cv_csv;
    std::size_t folds = 5;
    CLI::App* cv_cmd = app.add_subcommand("cv", "K-fold cross-validation over ranks and penalties");
    cv_f.add(cv_cmd);
    cv_cmd->remove_option(cv_cmd->get_option("--rank"));
    cv_cmd->remove_option(cv_cmd->get_option("--lambda"));
    cv_cmd->add_option("--ranks", ranks_s, "comma-separated candidate ranks")->required();
    cv_cmd->add_option("--lambdas", lambdas_s, "comma-separated candidate penalties")->required();
    cv_cmd->add_option("--folds", folds, "number of folds K")->capture_default_str();
    cv_cmd->add_option("--out", cv_csv, "optional CSV report");

    SimFlags sf;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "generate a simulated dataset");
    sim_cmd->add_option("--n", sf.n, "observations")->capture_default_str();
    sim_cmd->add_option("--in-dims", sf.in_dims, "predictor dims, e.g. 15,20")->capture_default_str();
    sim_cmd->add_option("--out-dims", sf.out_dims, "outcome dims, e.g. 5,10 or none")->capture_default_str();
    sim_cmd->add_option("--rank", sf.rank, "true rank (0 = no signal)")->capture_default_str();
    sim_cmd->add_option("--snr", sf.snr, "signal-to-noise ratio")->capture_default_str();
    sim_cmd->add_option("--seed", sf.seed, "random seed (default: $MWR_SEED or 0)");
    sim_cmd->add_option("--correlation", sf.correlation, "none, corr_X or corr_E")->capture_default_str();
    sim_cmd->add_option("--rho", sf.rho, "adjacent-cell correlation in (0, 1)")->capture_default_str();
    sim_cmd->add_option("--test-n", sf.test_n, "held-out observations from the same truth (0 = none)")
        ->capture_default_str();
    sim_cmd->add_option("--out-prefix", sf.out_prefix, "writes PREFIX_x.mwt, PREFIX_y.mwt, PREFIX_b.mwt")->required();

    std::string grid_path, exp_csv;
    std::size_t parallel = 1;
    bool dry_run = false;
    CLI::App* exp_cmd = app.add_subcommand("experiment", "run a simulation grid and write the results CSV");
    exp_cmd->add_option("--grid", grid_path, "grid file of key=value lines")->required();
    exp_cmd->add_option("--out", exp_csv, "results CSV");
    exp_cmd->add_option("--parallel", parallel, "worker threads")->capture_default_str();
    exp_cmd->add_flag("--dry-run", dry_run, "only report the design size");

    try {
        try {
            if (const std::string cfg = detail::take_option(args, "config"); !cfg.empty())
                detail::splice(args, io::load_key_values(cfg), app, cfg);
            if (const std::string spec = detail::take_option(args, "spec"); !spec.empty()) {
                if (args.empty() || args.front() != "simulate") throw InvalidArgument("--spec is only valid for simulate");
                detail::splice(args, io::load_key_values(spec), app, spec);
            }
            std::reverse(args.begin(), args.end());
            app.parse(args);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? 0 : 1;
        }
        if (fit_cmd->parsed()) return cmd_fit(fit_f, model_out, fit_cmd, ctx);
        if (pred_cmd->parsed()) return cmd_predict(model_in, px, pout, ctx);
        if (gibbs_cmd->parsed()) return cmd_gibbs(gibbs_f, gf, gibbs_cmd, ctx);
        if (cv_cmd->parsed()) return cmd_cv(cv_f, ranks_s, lambdas_s, folds, cv_csv, cv_cmd, ctx);
        if (sim_cmd->parsed()) return cmd_simulate(sf, sim_cmd, ctx);
        if (exp_cmd->parsed()) return cmd_experiment(grid_path, exp_csv, parallel, dry_run, ctx);
        return 1;
    } catch (const InvalidArgument& e) {
        err << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return 3;
    }
}

inline int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(std::move(args), std::cout, std::cerr);
}

} // namespace mwr::cli
