#pragma once

#include "mwr/estimation.hpp"
#include "mwr/inference.hpp"

#include <json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mwr::io {

using Json = nlohmann::json;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Strict decimal parse: whole token consumed, finite result.
inline double parse_double(const std::string& tok, const std::string& where) {
    if (tok.empty()) throw DataError(where + ": empty value");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw DataError(where + ": cannot parse '" + tok + "' as a number");
    if (!std::isfinite(v)) throw DataError(where + ": non-finite value '" + tok + "'");
    return v;
}

inline std::size_t parse_size(const std::string& tok, const std::string& where) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw DataError(where + ": expected a non-negative integer, got '" + tok + "'");
    return static_cast<std::size_t>(std::stoull(tok));
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

inline DenseTensor read_mwt(std::istream& in, const std::string& src) {
    std::string tok;
    if (!(in >> tok) || tok != "mwt") throw DataError(src + ": missing 'mwt' magic");
    if (!(in >> tok) || tok != "1") throw DataError(src + ": unsupported tensor file version '" + tok + "'");
    if (!(in >> tok)) throw DataError(src + ": missing order");
    const std::size_t order = parse_size(tok, src);
    if (order == 0) throw DataError(src + ": order must be at least 1");
    Dims dims(order);
    std::size_t count = 1;
    for (std::size_t k = 0; k < order; ++k) {
        if (!(in >> tok)) throw DataError(src + ": expected " + std::to_string(order) + " dims");
        dims[k] = parse_size(tok, src);
        count *= dims[k];
    }
    std::vector<double> values;
    values.reserve(count);
    while (in >> tok) values.push_back(parse_double(tok, src + ": value " + std::to_string(values.size() + 1)));
    if (values.size() != count)
        throw DataError(src + ": expected " + std::to_string(count) + " values for the stated dims, found " +
                        std::to_string(values.size()));
    return DenseTensor(std::move(dims), std::move(values));
}

/// Order-2 CSV, one observation per row.
inline DenseTensor read_csv(std::istream& in, const std::string& src) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            row.push_back(parse_double(trim(cell), src + ":" + std::to_string(lineno)));
        if (!line.empty() && line.back() == ',') throw DataError(src + ":" + std::to_string(lineno) + ": trailing comma");
        if (!rows.empty() && row.size() != rows.front().size())
            throw DataError(src + ":" + std::to_string(lineno) + ": expected " + std::to_string(rows.front().size()) +
                            " columns, found " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(src + ": no data rows");
    const std::size_t n = rows.size(), p = rows.front().size();
    DenseTensor t({n, p});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) t.values()[i + n * j] = rows[i][j];
    return t;
}

} // namespace detail

/// Reads either format; anything not starting with the magic is parsed as CSV.
inline DenseTensor read_tensor(std::istream& in, const std::string& src = "<stream>") {
    std::string first;
    std::streampos start = in.tellg();
    while (std::getline(in, first) && detail::trim(first).empty()) {}
    in.clear();
    in.seekg(start);
    if (detail::trim(first).rfind("mwt", 0) == 0) return detail::read_mwt(in, src);
    return detail::read_csv(in, src);
}

inline DenseTensor load_tensor(const std::string& path) {
    std::ifstream in = detail::open_in(path);
    return read_tensor(in, path);
}

inline void write_tensor(std::ostream& out, const DenseTensor& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) throw DataError("write_tensor: non-finite value");
    out << "mwt 1\n" << t.order() << '\n';
    for (std::size_t k = 0; k < t.order(); ++k) out << (k ? " " : "") << t.dim(k);
    out << '\n';
    for (double v : t.values()) out << detail::format_double(v) << '\n';
}

inline void save_tensor(const std::string& path, const DenseTensor& t) {
    std::ofstream out = detail::open_out(path);
    write_tensor(out, t);
    if (!out) throw IoError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline Json matrix_to_json(const Matrix& m) {
    return Json(std::vector<double>(m.data(), m.data() + m.size()));
}

inline Matrix matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    const auto v = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != rows * cols)
        throw DataError(what + ": expected " + std::to_string(rows * cols) + " values, found " + std::to_string(v.size()));
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline Json factors_to_json(const CpCoefficients& b) {
    Json arr = Json::array();
    for (std::size_t k = 0; k < b.num_modes(); ++k) arr.push_back(matrix_to_json(b.factor(k)));
    return arr;
}

inline CpCoefficients factors_from_json(const Json& j, const Dims& in_dims, const Dims& out_dims, std::size_t rank,
                                        const std::string& what) {
    if (!j.is_array() || j.size() != in_dims.size() + out_dims.size())
        throw DataError(what + ": factor count does not match the dims");
    const auto R = static_cast<Eigen::Index>(rank);
    std::vector<Matrix> u, v;
    for (std::size_t l = 0; l < in_dims.size(); ++l)
        u.push_back(matrix_from_json(j[l], static_cast<Eigen::Index>(in_dims[l]), R, what));
    for (std::size_t m = 0; m < out_dims.size(); ++m)
        v.push_back(matrix_from_json(j[in_dims.size() + m], static_cast<Eigen::Index>(out_dims[m]), R, what));
    return {std::move(u), std::move(v)};
}

inline Json tensor_to_json(const DenseTensor& t) {
    return Json{{"dims", t.dims()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

inline DenseTensor tensor_from_json(const Json& j) {
    return DenseTensor(j.at("dims").get<Dims>(), j.at("values").get<std::vector<double>>());
}

inline Json centering_to_json(const Centering& c) {
    Json j{{"enabled", c.enabled}};
    if (c.enabled) {
        j["x_offset"] = tensor_to_json(c.x_offset);
        j["y_offset"] = tensor_to_json(c.y_offset);
    }
    return j;
}

inline Centering centering_from_json(const Json& j) {
    Centering c;
    c.enabled = j.at("enabled").get<bool>();
    if (c.enabled) {
        c.x_offset = tensor_from_json(j.at("x_offset"));
        c.y_offset = tensor_from_json(j.at("y_offset"));
    }
    return c;
}

inline void check_header(const Json& j, const char* format, const std::string& src) {
    if (!j.is_object() || j.value("format", std::string()) != format)
        throw DataError(src + ": not a " + std::string(format) + " file");
    if (j.value("version", 0) != 1) throw DataError(src + ": unsupported version");
}

inline Json parse_json_file(const std::string& path) {
    std::ifstream in = open_in(path);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out = open_out(path);
    out << j.dump(1) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

template <class F>
auto guard_json(const std::string& src, F&& f) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw DataError(src + ": malformed file: " + e.what());
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Model file

/// A fitted model: coefficients, the centering used in training and fit metadata.
struct Model {
    CpCoefficients coefficients;
    double lambda = 0.0;
    Centering centering;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::uint64_t seed = 0;

    static Model from_fit(const FitResult& f) {
        return {f.coefficients, f.lambda, f.centering, f.objective, f.iterations, f.converged, f.seed};
    }
};

inline Json model_to_json(const Model& m) {
    const CpCoefficients& b = m.coefficients;
    return Json{{"format", "mwr-model"},
                {"version", 1},
                {"in_dims", b.in_dims()},
                {"out_dims", b.out_dims()},
                {"rank", b.rank()},
                {"lambda", m.lambda},
                {"factors", detail::factors_to_json(b)},
                {"centering", detail::centering_to_json(m.centering)},
                {"fit",
                 {{"objective", m.objective}, {"iterations", m.iterations}, {"converged", m.converged}, {"seed", m.seed}}}};
}

inline Model model_from_json(const Json& j, const std::string& src = "<model>") {
    detail::check_header(j, "mwr-model", src);
    return detail::guard_json(src, [&] {
        Model m;
        const Dims in_dims = j.at("in_dims").get<Dims>();
        const Dims out_dims = j.at("out_dims").get<Dims>();
        m.coefficients = detail::factors_from_json(j.at("factors"), in_dims, out_dims, j.at("rank").get<std::size_t>(), src);
        m.lambda = j.at("lambda").get<double>();
        m.centering = detail::centering_from_json(j.at("centering"));
        const Json& f = j.at("fit");
        m.objective = f.at("objective").get<double>();
        m.iterations = f.at("iterations").get<std::size_t>();
        m.converged = f.at("converged").get<bool>();
        m.seed = f.at("seed").get<std::uint64_t>();
        return m;
    });
}

inline void save_model(const std::string& path, const Model& m) { detail::write_json_file(path, model_to_json(m)); }

inline Model load_model(const std::string& path) { return model_from_json(detail::parse_json_file(path), path); }

// ---------------------------------------------------------------------------
// Draws file

inline Json draws_to_json(const PosteriorDraws& d) {
    const CpCoefficients& b = d.mode;
    Json samples = Json::array();
    for (const auto& f : d.factors) samples.push_back(detail::factors_to_json(f));
    return Json{{"format", "mwr-draws"},
                {"version", 1},
                {"in_dims", b.in_dims()},
                {"out_dims", b.out_dims()},
                {"rank", b.rank()},
                {"lambda", d.lambda},
                {"centering", detail::centering_to_json(d.centering)},
                {"mode", detail::factors_to_json(b)},
                {"sigma2", d.sigma2},
                {"draws", std::move(samples)}};
}

inline PosteriorDraws draws_from_json(const Json& j, const std::string& src = "<draws>") {
    detail::check_header(j, "mwr-draws", src);
    return detail::guard_json(src, [&] {
        PosteriorDraws d;
        const Dims in_dims = j.at("in_dims").get<Dims>();
        const Dims out_dims = j.at("out_dims").get<Dims>();
        const auto R = j.at("rank").get<std::size_t>();
        d.lambda = j.at("lambda").get<double>();
        d.centering = detail::centering_from_json(j.at("centering"));
        d.mode = detail::factors_from_json(j.at("mode"), in_dims, out_dims, R, src);
        d.sigma2 = j.at("sigma2").get<std::vector<double>>();
        for (const Json& s : j.at("draws")) d.factors.push_back(detail::factors_from_json(s, in_dims, out_dims, R, src));
        if (d.factors.size() != d.sigma2.size()) throw DataError(src + ": sigma2 and factor draw counts differ");
        return d;
    });
}

inline void save_draws(const std::string& path, const PosteriorDraws& d) { detail::write_json_file(path, draws_to_json(d)); }

inline PosteriorDraws load_draws(const std::string& path) { return draws_from_json(detail::parse_json_file(path), path); }

// ---------------------------------------------------------------------------
// key=value files

/// `key = value` lines; blank lines and `#` comments are skipped. Order is kept.
inline std::vector<std::pair<std::string, std::string>> read_key_values(std::istream& in, const std::string& src) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument(src + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw InvalidArgument(src + ":" + std::to_string(lineno) + ": empty key");
        for (char& c : key)
            if (c == '_') c = '-';
        out.emplace_back(std::move(key), detail::trim(line.substr(eq + 1)));
    }
    return out;
}

inline std::vector<std::pair<std::string, std::string>> load_key_values(const std::string& path) {
    std::ifstream in = detail::open_in(path);
    return read_key_values(in, path);
}

} // namespace mwr::io
