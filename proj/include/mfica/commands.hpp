#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mfica/basis.hpp"
#include "mfica/eval.hpp"
#include "mfica/fpca.hpp"
#include "mfica/ica.hpp"
#include "mfica/io.hpp"
#include "mfica/sim.hpp"

namespace mfica::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, input_error = 1, numerical_failure = 2 };

inline fs::path prepare_output_dir(const std::string& dir)
{
    const fs::path p = dir.empty() ? fs::path(".") : fs::path(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) throw InputError("cannot create output directory '" + p.string() + "'");
    return p;
}

struct FitArgs {
    std::string input;
    std::string output_dir = ".";
    int basis_k = 11;
    std::optional<Interval> interval;
    double ridge = 0.0;
};

/// Curves CSV -> coefficients.csv + basis.json. The interval defaults to the
/// observed time range.
inline void cmd_fit(const FitArgs& a)
{
    auto in = io::open_input(a.input);
    const io::CurveTable table = io::read_curves_csv(in);
    const Interval iv = a.interval.value_or(Interval{table.t_min, table.t_max});
    if (!(iv.hi > iv.lo))
        throw InputError("cannot infer a basis interval from a single time point; pass --interval");
    const BasisSpec basis = fourier_basis(a.basis_k, iv);
    const CoefMatrix coef = fit_coefficients(table.curves, basis, FitOptions{a.ridge});

    const fs::path out = prepare_output_dir(a.output_dir);
    io::write_file((out / "coefficients.csv").string(), io::write_coefficients_csv(table.obs_ids, coef));
    io::write_file((out / "basis.json").string(), io::basis_to_json(basis).dump(2) + "\n");
}

struct IcaArgs {
    std::string input;
    std::string basis;
    std::string output_dir = ".";
    std::optional<int> d;
    Method method = Method::JADE;
};

struct IcaResult {
    UnmixingModel model;
    ScoreMatrix scores;
    std::vector<std::string> obs_ids;
};

inline io::CoefTable load_coefficients(const std::string& path)
{
    auto in = io::open_input(path);
    return io::read_coefficients_csv(in);
}

inline std::optional<BasisSpec> load_basis(const std::string& coef_path, const std::string& basis_path)
{
    fs::path p = basis_path.empty() ? fs::path(coef_path).parent_path() / "basis.json" : fs::path(basis_path);
    if (basis_path.empty() && !fs::exists(p)) return std::nullopt;
    auto in = io::open_input(p.string());
    return io::basis_from_json(io::parse_json(in, "basis JSON"));
}

/// Library pipeline behind `ica`: center, FPCA (d defaults to p), whiten, fit.
inline IcaResult run_ica(const io::CoefTable& table, const std::optional<BasisSpec>& basis,
                         std::optional<int> d, Method method)
{
    const CoefMatrix& coef = table.coef;
    if (basis && basis->K != coef.K)
        throw InputError("basis has K = " + std::to_string(basis->K) + " but coefficients have K = "
                         + std::to_string(coef.K));
    const CoefMatrix centered = center_coefficients(coef);
    const int dim = d.value_or(coef.p);
    const FpcaModel fpca = basis ? fpca_reduce(centered, *basis, dim)
                                 : fpca_reduce(centered, Eigen::MatrixXd::Identity(coef.K, coef.K), dim);
    const WhitenedScores w = whiten(centered, fpca);
    IcaResult r;
    r.model = fit_method(w, method);
    r.scores = component_scores(centered, r.model);
    r.obs_ids = table.obs_ids;
    return r;
}

/// Writes model.json, loadings.csv, scores.csv and score_moments.csv.
inline IcaResult cmd_ica(const IcaArgs& a)
{
    const io::CoefTable table = load_coefficients(a.input);
    const std::optional<BasisSpec> basis = load_basis(a.input, a.basis);
    IcaResult r = run_ica(table, basis, a.d, a.method);

    const fs::path out = prepare_output_dir(a.output_dir);
    io::write_file((out / "model.json").string(), io::unmixing_to_json(r.model).dump(2) + "\n");
    io::write_file((out / "loadings.csv").string(),
                   io::write_loadings_csv(r.model.loadings, r.model.fpca->p, r.model.fpca->K));
    io::write_file((out / "scores.csv").string(), io::write_scores_csv(r.obs_ids, r.scores.data));

    const Eigen::VectorXd m4 = standardized_fourth_moments(r.scores.data);
    const std::vector<int> rank = fourth_moment_rank(r.scores.data);
    std::vector<int> position(rank.size());
    for (std::size_t i = 0; i < rank.size(); ++i) position[rank[i]] = static_cast<int>(i) + 1;
    std::string moments = "score,fourth_moment,rank\n";
    for (Eigen::Index k = 0; k < m4.size(); ++k)
        moments += std::to_string(k + 1) + ',' + format_double(m4(k)) + ',' + std::to_string(position[k]) + '\n';
    io::write_file((out / "score_moments.csv").string(), moments);
    return r;
}

struct ScoresArgs {
    std::string input;
    std::string model;
    std::string output_dir = ".";
};

/// Applies a saved model to (possibly new) coefficients, centering with the
/// training means stored in the model.
inline void cmd_scores(const ScoresArgs& a)
{
    const io::CoefTable table = load_coefficients(a.input);
    auto in = io::open_input(a.model);
    const UnmixingModel model = io::unmixing_from_json(io::parse_json(in, "model JSON"));
    const ScoreMatrix s = component_scores(table.coef, model);
    const fs::path out = prepare_output_dir(a.output_dir);
    io::write_file((out / "scores.csv").string(), io::write_scores_csv(table.obs_ids, s.data));
}

struct SimulateArgs {
    std::string config;
    std::string output_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> replications;
    std::optional<int> parallelism;
};

struct SimulateOutcome {
    int failures = 0;
    std::size_t records = 0;
};

/// Writes mdi_results.csv (per replication) and mdi_summary.csv (means).
inline SimulateOutcome cmd_simulate(const SimulateArgs& a, std::ostream& log = std::cerr)
{
    io::StudyConfig sc;
    if (a.config.empty()) {
        sc.grid = full_grid(1, 100);
    } else {
        auto in = io::open_input(a.config);
        sc = io::study_from_json(io::parse_json(in, "study config"));
    }
    for (auto& c : sc.grid) {
        if (a.seed) c.seed = *a.seed;
        if (a.replications) c.replications = *a.replications;
        validate(c);
    }
    if (a.parallelism) sc.parallelism = *a.parallelism;
    detail::require(sc.parallelism >= 1, "parallelism must be at least 1");

    const fs::path out = prepare_output_dir(a.output_dir);
    const StudyResult res = run_study(sc.grid, sc.parallelism);
    io::write_file((out / "mdi_results.csv").string(), study_csv(res));
    io::write_file((out / "mdi_summary.csv").string(), summary_csv(summarize_study(res)));

    if (res.failures > 0) {
        log << res.failures << " replication record(s) failed:\n";
        int shown = 0;
        for (const auto& r : res.records) {
            if (r.mdi || shown >= 10) continue;
            log << "  " << to_string(r.setting) << " lambda=" << format_double(r.lambda_mix) << " n=" << r.n
                << ' ' << to_string(r.method) << " rep " << r.replication << ": " << r.error << '\n';
            ++shown;
        }
    }
    return {res.failures, res.records.size()};
}

struct MdiArgs {
    std::string input;
    std::optional<int> basis_k;
};

/// Minimum distance index of a headerless numeric CSV matrix. With
/// `basis_k`, the matrix is a d x pK gain and is block-collapsed first.
inline double cmd_mdi(const MdiArgs& a)
{
    auto in = io::open_input(a.input);
    const auto rows = io::read_csv(in);
    if (rows.empty()) throw InputError("MDI input is empty");
    const auto cols = rows.front().fields.size();
    Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].fields.size() != cols)
            throw InputError("line " + std::to_string(rows[r].line) + ": ragged matrix row");
        for (std::size_t c = 0; c < cols; ++c)
            M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))
                = io::parse_double(rows[r].fields[c], rows[r].line, "matrix entry");
    }
    if (a.basis_k) {
        const int K = *a.basis_k;
        if (K < 1 || M.cols() % K != 0)
            throw InputError("matrix column count is not a multiple of K = " + std::to_string(K));
        M = block_collapse(M, static_cast<int>(M.cols() / K), K);
    }
    return minimum_distance_index(M);
}

} // namespace mfica::cli
