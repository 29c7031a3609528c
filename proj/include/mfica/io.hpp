#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mfica/basis.hpp"
#include "mfica/error.hpp"
#include "mfica/fpca.hpp"
#include "mfica/ica.hpp"
#include "mfica/sim.hpp"

namespace mfica::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV primitives
// ---------------------------------------------------------------------------

struct CsvRow {
    int line = 0;
    std::vector<std::string> fields;
};

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

/// Splits one line on commas. Double-quoted fields may contain commas and
/// doubled quotes.
inline std::vector<std::string> split_csv_line(std::string_view line, int line_no)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"' && trim(cur).empty()) {
            quoted = true;
            was_quoted = true;
            cur.clear();
        } else if (ch == ',') {
            out.emplace_back(was_quoted ? cur : std::string(trim(cur)));
            cur.clear();
            was_quoted = false;
        } else {
            cur += ch;
        }
    }
    if (quoted) throw InputError("line " + std::to_string(line_no) + ": unterminated quoted field");
    out.emplace_back(was_quoted ? cur : std::string(trim(cur)));
    return out;
}

/// All non-blank lines, numbered from 1.
inline std::vector<CsvRow> read_csv(std::istream& in)
{
    std::vector<CsvRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        rows.push_back({line_no, split_csv_line(line, line_no)});
    }
    return rows;
}

inline double parse_double(const std::string& raw, int line_no, const char* what)
{
    const std::string s(trim(raw));
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || s.empty())
        throw InputError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" + s + "'");
    return v;
}

inline long long parse_int(const std::string& raw, int line_no, const char* what)
{
    const std::string s(trim(raw));
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw InputError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" + s + "'");
    return v;
}

inline std::string quote_if_needed(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

inline std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file '" + path + "'");
    return in;
}

inline void write_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write output file '" + path + "'");
    out << content;
    if (!out) throw InputError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Curves in long format: obs_id,component,t,value
// ---------------------------------------------------------------------------

struct CurveTable {
    std::vector<std::string> obs_ids;
    SampledCurveSet curves;
    double t_min = 0.0;
    double t_max = 0.0;
};

/// Observations keep their order of first appearance; p is the largest
/// component index seen, and every (observation, component) cell must occur.
inline CurveTable read_curves_csv(std::istream& in)
{
    const auto rows = read_csv(in);
    if (rows.empty()) throw InputError("curves CSV is empty");
    const std::vector<std::string> header{"obs_id", "component", "t", "value"};
    if (rows.front().fields != header)
        throw InputError("line " + std::to_string(rows.front().line)
                         + ": expected header 'obs_id,component,t,value'");

    CurveTable table;
    std::map<std::string, int> index;
    struct Sample {
        int obs;
        int comp;
        double t;
        double value;
    };
    std::vector<Sample> samples;
    int p = 0;
    bool first = true;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != 4)
            throw InputError("line " + std::to_string(row.line) + ": expected 4 fields, got "
                             + std::to_string(row.fields.size()));
        const long long comp = parse_int(row.fields[1], row.line, "component");
        if (comp < 1) throw InputError("line " + std::to_string(row.line) + ": component must be >= 1");
        const double t = parse_double(row.fields[2], row.line, "t");
        const double v = parse_double(row.fields[3], row.line, "value");
        if (!std::isfinite(t) || !std::isfinite(v))
            throw InputError("line " + std::to_string(row.line) + ": non-finite t or value");
        auto [it, inserted] = index.emplace(row.fields[0], static_cast<int>(table.obs_ids.size()));
        if (inserted) table.obs_ids.push_back(row.fields[0]);
        samples.push_back({it->second, static_cast<int>(comp) - 1, t, v});
        p = std::max(p, static_cast<int>(comp));
        table.t_min = first ? t : std::min(table.t_min, t);
        table.t_max = first ? t : std::max(table.t_max, t);
        first = false;
    }
    if (samples.empty()) throw InputError("curves CSV has no data rows");

    auto& cs = table.curves;
    cs.n = static_cast<int>(table.obs_ids.size());
    cs.p = p;
    cs.cells.assign(cs.n, std::vector<CurveSamples>(p));
    for (const auto& s : samples) {
        cs.cells[s.obs][s.comp].t.push_back(s.t);
        cs.cells[s.obs][s.comp].value.push_back(s.value);
    }
    for (int i = 0; i < cs.n; ++i)
        for (int j = 0; j < p; ++j)
            if (cs.cells[i][j].t.empty())
                throw InputError("observation '" + table.obs_ids[i] + "' has no samples for component "
                                 + std::to_string(j + 1));
    return table;
}

// ---------------------------------------------------------------------------
// Coefficients: obs_id,c_1_1,...,c_p_K
// ---------------------------------------------------------------------------

struct CoefTable {
    std::vector<std::string> obs_ids;
    CoefMatrix coef;
};

inline std::string write_coefficients_csv(const std::vector<std::string>& ids, const CoefMatrix& c)
{
    detail::require(static_cast<int>(ids.size()) == c.n(), "coefficient CSV: id count mismatch");
    std::string out = "obs_id";
    for (int j = 1; j <= c.p; ++j)
        for (int k = 1; k <= c.K; ++k) out += ",c_" + std::to_string(j) + "_" + std::to_string(k);
    out += '\n';
    for (int i = 0; i < c.n(); ++i) {
        out += quote_if_needed(ids[i]);
        for (Eigen::Index col = 0; col < c.data.cols(); ++col) out += ',' + format_double(c.data(i, col));
        out += '\n';
    }
    return out;
}

inline CoefTable read_coefficients_csv(std::istream& in)
{
    const auto rows = read_csv(in);
    if (rows.empty()) throw InputError("coefficient CSV is empty");
    const auto& header = rows.front().fields;
    if (header.size() < 2 || header[0] != "obs_id")
        throw InputError("line " + std::to_string(rows.front().line) + ": expected header 'obs_id,c_1_1,...'");

    // Column names c_j_k in component-major order determine p and K.
    int p = 0, K = 0;
    for (std::size_t c = 1; c < header.size(); ++c) {
        int j = 0, k = 0;
        char tail = 0;
        if (std::sscanf(header[c].c_str(), "c_%d_%d%c", &j, &k, &tail) != 2)
            throw InputError("line " + std::to_string(rows.front().line) + ": bad coefficient column '"
                             + header[c] + "'");
        p = std::max(p, j);
        K = std::max(K, k);
    }
    if (static_cast<std::size_t>(p) * K != header.size() - 1)
        throw InputError("coefficient CSV header does not form a complete p x K layout");
    for (int j = 1, c = 1; j <= p; ++j)
        for (int k = 1; k <= K; ++k, ++c)
            if (header[c] != "c_" + std::to_string(j) + "_" + std::to_string(k))
                throw InputError("coefficient CSV columns must be ordered c_1_1..c_p_K; found '" + header[c] + "'");

    CoefTable t;
    Eigen::MatrixXd data(static_cast<Eigen::Index>(rows.size() - 1), p * K);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size())
            throw InputError("line " + std::to_string(row.line) + ": expected " + std::to_string(header.size())
                             + " fields, got " + std::to_string(row.fields.size()));
        t.obs_ids.push_back(row.fields[0]);
        for (std::size_t c = 1; c < row.fields.size(); ++c)
            data(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1))
                = parse_double(row.fields[c], row.line, "coefficient");
    }
    t.coef = make_coef_matrix(std::move(data), p, K);
    return t;
}

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

inline json matrix_row_major(const Eigen::MatrixXd& m)
{
    json arr = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
    return arr;
}

inline json vector_json(const Eigen::VectorXd& v)
{
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what)
{
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows * cols)
        throw InputError(std::string("model JSON: '") + what + "' must hold " + std::to_string(rows * cols)
                         + " numbers");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(static_cast<std::size_t>(r * cols + c)).get<double>();
    return m;
}

inline Eigen::VectorXd vector_from_json(const json& j, const char* what)
{
    if (!j.is_array()) throw InputError(std::string("model JSON: '") + what + "' must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

inline json basis_to_json(const BasisSpec& b)
{
    return json{{"kind", to_string(b.kind)}, {"K", b.K}, {"interval", {b.interval.lo, b.interval.hi}}};
}

inline BasisSpec basis_from_json(const json& j)
{
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind != "fourier") throw InputError("basis JSON: unsupported kind '" + kind + "'");
        const auto& iv = j.at("interval");
        if (!iv.is_array() || iv.size() != 2) throw InputError("basis JSON: interval must be [a, b]");
        return fourier_basis(j.at("K").get<int>(), {iv[0].get<double>(), iv[1].get<double>()});
    } catch (const json::exception& e) {
        throw InputError(std::string("basis JSON: ") + e.what());
    }
}

inline json fpca_to_json(const FpcaModel& m)
{
    return json{{"p", m.p},
                {"K", m.K},
                {"d", m.d},
                {"lambda", vector_json(m.lambda)},
                {"phi", matrix_row_major(m.phi)},
                {"basis", m.basis ? basis_to_json(*m.basis) : json(nullptr)},
                {"gram", matrix_row_major(m.gram)},
                {"spectrum", vector_json(m.spectrum)},
                {"column_means", vector_json(m.column_means)},
                {"eigen_gap_warning", m.eigen_gap_warning}};
}

inline FpcaModel fpca_from_json(const json& j)
{
    try {
        FpcaModel m;
        m.p = j.at("p").get<int>();
        m.K = j.at("K").get<int>();
        m.d = j.at("d").get<int>();
        if (m.p < 1 || m.K < 1 || m.d < 1 || m.d > m.p * m.K) throw InputError("model JSON: bad p, K or d");
        m.lambda = vector_from_json(j.at("lambda"), "lambda");
        if (m.lambda.size() != m.d) throw InputError("model JSON: lambda must have d entries");
        m.phi = matrix_from_json(j.at("phi"), m.p * m.K, m.d, "phi");
        if (j.contains("basis") && !j["basis"].is_null()) m.basis = basis_from_json(j["basis"]);
        m.gram = j.contains("gram") ? matrix_from_json(j["gram"], m.K, m.K, "gram")
                                    : Eigen::MatrixXd::Identity(m.K, m.K);
        if (j.contains("spectrum")) m.spectrum = vector_from_json(j["spectrum"], "spectrum");
        m.column_means = j.contains("column_means") ? vector_from_json(j["column_means"], "column_means")
                                                    : Eigen::VectorXd::Zero(m.p * m.K);
        if (m.column_means.size() != m.p * m.K) throw InputError("model JSON: column_means must have pK entries");
        m.eigen_gap_warning = j.value("eigen_gap_warning", false);
        return m;
    } catch (const json::exception& e) {
        throw InputError(std::string("model JSON: ") + e.what());
    }
}

inline json unmixing_to_json(const UnmixingModel& u)
{
    json j{{"method", to_string(u.method)},
           {"d", u.d()},
           {"psi", matrix_row_major(u.psi)},
           {"loadings", matrix_row_major(u.loadings)},
           {"component_order", u.component_order}};
    if (u.fobi_eigenvalues) j["fobi_eigenvalues"] = vector_json(*u.fobi_eigenvalues);
    if (u.method == Method::JADE) {
        j["joint_diagonalization"] = json{{"objective", u.jd_objective},
                                          {"sweeps", u.jd_sweeps},
                                          {"converged", u.jd_converged},
                                          {"column_contribution", vector_json(u.jd_column_contribution)}};
    }
    j["warnings"] = u.warnings;
    if (u.fpca) j["fpca"] = fpca_to_json(*u.fpca);
    return j;
}

inline UnmixingModel unmixing_from_json(const json& j)
{
    try {
        UnmixingModel u;
        u.method = parse_method(j.at("method").get<std::string>());
        u.fpca = std::make_shared<const FpcaModel>(fpca_from_json(j.at("fpca")));
        const int d = j.at("d").get<int>();
        if (d != u.fpca->d) throw InputError("model JSON: d does not match the FPCA part");
        u.psi = matrix_from_json(j.at("psi"), d, d, "psi");
        u.loadings = matrix_from_json(j.at("loadings"), d, u.fpca->p * u.fpca->K, "loadings");
        u.component_order = j.at("component_order").get<std::vector<int>>();
        if (j.contains("fobi_eigenvalues")) u.fobi_eigenvalues = vector_from_json(j["fobi_eigenvalues"], "fobi_eigenvalues");
        if (j.contains("joint_diagonalization")) {
            const json& jd = j["joint_diagonalization"];
            u.jd_objective = jd.value("objective", 0.0);
            u.jd_sweeps = jd.value("sweeps", 0);
            u.jd_converged = jd.value("converged", true);
            if (jd.contains("column_contribution"))
                u.jd_column_contribution = vector_from_json(jd["column_contribution"], "column_contribution");
        }
        if (j.contains("warnings")) u.warnings = j["warnings"].get<std::vector<std::string>>();
        return u;
    } catch (const json::exception& e) {
        throw InputError(std::string("model JSON: ") + e.what());
    }
}

inline json parse_json(std::istream& in, const std::string& what)
{
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError(what + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Score and loading tables
// ---------------------------------------------------------------------------

inline std::string write_scores_csv(const std::vector<std::string>& ids, const Eigen::MatrixXd& scores)
{
    detail::require(static_cast<Eigen::Index>(ids.size()) == scores.rows(), "scores CSV: id count mismatch");
    std::string out = "obs_id";
    for (Eigen::Index k = 1; k <= scores.cols(); ++k) out += ",score_" + std::to_string(k);
    out += '\n';
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        out += quote_if_needed(ids[static_cast<std::size_t>(i)]);
        for (Eigen::Index k = 0; k < scores.cols(); ++k) out += ',' + format_double(scores(i, k));
        out += '\n';
    }
    return out;
}

/// One row per (score, original component, basis function) loading.
inline std::string write_loadings_csv(const Eigen::MatrixXd& W, int p, int K)
{
    detail::require(W.cols() == static_cast<Eigen::Index>(p) * K, "loadings CSV: W must have pK columns");
    std::string out = "score,component,basis_index,loading\n";
    for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (int j = 0; j < p; ++j)
            for (int k = 0; k < K; ++k)
                out += std::to_string(r + 1) + ',' + std::to_string(j + 1) + ',' + std::to_string(k + 1) + ','
                       + format_double(W(r, static_cast<Eigen::Index>(j) * K + k)) + '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Study configuration
// ---------------------------------------------------------------------------

struct StudyConfig {
    std::vector<SimConfig> grid;
    int parallelism = 1;
};

namespace detail {

template <typename T>
std::vector<T> scalar_or_list(const json& j, const char* key, std::vector<T> fallback)
{
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
}

} // namespace detail

/**
 * Study grid from a JSON object. `setting`, `lambda` and `n` accept a single
 * value or a list; their cross product forms the grid. Omitted grid fields
 * default to the full study grid. Also: `d`, `methods`, `seed`,
 * `replications`, `parallelism`.
 */
inline StudyConfig study_from_json(const json& j)
{
    if (!j.is_object()) throw InputError("study config must be a JSON object");
    try {
        StudyConfig sc;
        const auto settings = detail::scalar_or_list<std::string>(j, "setting", {"S1", "S2"});
        const auto lambdas = detail::scalar_or_list<double>(j, "lambda", {0.5, 1.0, 1.5, 2.0, 2.5});
        const auto ns = detail::scalar_or_list<int>(j, "n", {1000, 2000, 4000, 8000, 16000, 32000, 64000});
        const auto method_names = detail::scalar_or_list<std::string>(j, "methods", {"PCA", "FOBI", "JADE"});
        SimConfig base;
        base.d = j.value("d", sim_p);
        base.seed = j.value("seed", std::uint64_t{1});
        base.replications = j.value("replications", 100);
        base.methods.clear();
        for (const auto& m : method_names) base.methods.push_back(parse_method(m));
        sc.parallelism = j.value("parallelism", 1);
        for (const auto& s : settings)
            for (double lam : lambdas)
                for (int n : ns) {
                    SimConfig c = base;
                    c.setting = parse_setting(s);
                    c.lambda_mix = lam;
                    c.n = n;
                    validate(c);
                    sc.grid.push_back(c);
                }
        return sc;
    } catch (const json::exception& e) {
        throw InputError(std::string("study config: ") + e.what());
    }
}

} // namespace mfica::io
