#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfica/fpca.hpp"
#include "mfica/matalg.hpp"

namespace mfica {

enum class Method { PCA, FOBI, JADE };

inline const char* to_string(Method m)
{
    switch (m) {
    case Method::PCA: return "PCA";
    case Method::FOBI: return "FOBI";
    case Method::JADE: return "JADE";
    }
    return "?";
}

inline Method parse_method(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "pca") return Method::PCA;
    if (s == "fobi") return Method::FOBI;
    if (s == "jade") return Method::JADE;
    throw InputError("unknown method '" + s + "' (expected pca, fobi or jade)");
}

/// Fourth-order cross-cumulant matrix of whitened scores for the index pair
/// (k, l), 0-based.
struct CumulantMatrix {
    int k = 0;
    int l = 0;
    Eigen::MatrixXd data;
};

/// (1/n) sum_i |x_i|^2 x_i x_i^T - (d + 2) I, accumulated in row order.
inline Eigen::MatrixXd fobi_matrix(const Eigen::MatrixXd& X)
{
    detail::require(X.rows() > 0 && X.cols() > 0, "fobi_matrix: empty scores");
    const auto d = X.cols();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Eigen::VectorXd x = X.row(i).transpose();
        acc.noalias() += x.squaredNorm() * (x * x.transpose());
    }
    acc /= static_cast<double>(X.rows());
    acc.diagonal().array() -= static_cast<double>(d + 2);
    return 0.5 * (acc + acc.transpose());
}

inline Eigen::MatrixXd fobi_matrix(const WhitenedScores& w) { return fobi_matrix(w.data); }

/// (1/n) sum_i x_ik x_il x_i x_i^T - delta_kl I - e_k e_l^T - e_l e_k^T.
inline CumulantMatrix jade_cumulant(const Eigen::MatrixXd& X, int k, int l)
{
    const auto d = static_cast<int>(X.cols());
    detail::require(X.rows() > 0, "jade_cumulant: empty scores");
    detail::require(k >= 0 && k < d && l >= 0 && l < d,
        "jade_cumulant: index pair (" + std::to_string(k) + ", " + std::to_string(l)
            + ") out of range for d = " + std::to_string(d));
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Eigen::VectorXd x = X.row(i).transpose();
        acc.noalias() += (x(k) * x(l)) * (x * x.transpose());
    }
    acc /= static_cast<double>(X.rows());
    if (k == l) acc.diagonal().array() -= 1.0;
    acc(k, l) -= 1.0;
    acc(l, k) -= 1.0;
    return {k, l, 0.5 * (acc + acc.transpose())};
}

inline CumulantMatrix jade_cumulant(const WhitenedScores& w, int k, int l)
{
    return jade_cumulant(w.data, k, l);
}

/// All cumulant matrices with k <= l, in (k, l) lexicographic order.
inline std::vector<CumulantMatrix> jade_cumulants(const Eigen::MatrixXd& X)
{
    const auto d = static_cast<int>(X.cols());
    std::vector<CumulantMatrix> out;
    out.reserve(static_cast<std::size_t>(d * (d + 1) / 2));
    for (int k = 0; k < d; ++k)
        for (int l = k; l < d; ++l) out.push_back(jade_cumulant(X, k, l));
    return out;
}

struct UnmixingModel {
    Method method = Method::JADE;
    /// d x d orthogonal rotation; columns are the unmixing directions in the
    /// whitened eigenbasis, already in output order and sign.
    Eigen::MatrixXd psi;
    /// d x pK loadings W = psi^T Lambda^{-1/2} Phi^T (I (x) G).
    Eigen::MatrixXd loadings;
    std::optional<Eigen::VectorXd> fobi_eigenvalues;
    /// component_order[r] is the raw estimator column placed at output row r.
    std::vector<int> component_order;
    std::shared_ptr<const FpcaModel> fpca;

    // Joint diagonalization diagnostics (JADE only).
    double jd_objective = 0.0;
    int jd_sweeps = 0;
    bool jd_converged = true;
    Eigen::VectorXd jd_column_contribution;

    std::vector<std::string> warnings;

    int d() const { return static_cast<int>(psi.cols()); }
};

/// W = psi^T Lambda^{-1/2} Phi^T (I (x) G).
inline Eigen::MatrixXd unmixing_loadings(const FpcaModel& m, const Eigen::MatrixXd& psi)
{
    detail::require(psi.rows() == m.d && psi.cols() == m.d,
        "unmixing_loadings: psi must be d x d with d = " + std::to_string(m.d));
    return psi.transpose() * whitening_map(m);
}

namespace detail {

inline void check_fit_input(const WhitenedScores& w, const char* who)
{
    require(w.model != nullptr, std::string(who) + ": whitened scores carry no FPCA model");
    require(w.n() > w.d(), std::string(who) + ": need n > d observations");
    require(w.d() == w.model->d, std::string(who) + ": score dimension does not match model");
}

/// Flip psi columns so every loading row has its largest-|entry| positive.
inline void apply_loading_signs(UnmixingModel& u)
{
    Eigen::MatrixXd W = unmixing_loadings(*u.fpca, u.psi);
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < W.cols(); ++c)
            if (std::abs(W(r, c)) > std::abs(W(r, best))) best = c;
        if (W(r, best) < 0) {
            u.psi.col(r) = -u.psi.col(r);
            W.row(r) = -W.row(r);
        }
    }
    u.loadings = std::move(W);
}

inline Eigen::VectorXd excess_kurtosis(const Eigen::MatrixXd& Z)
{
    return (Z.array().pow(4).colwise().mean() - 3.0).transpose();
}

} // namespace detail

/// Principal component baseline: psi = I, scores are the whitened PCA scores.
inline UnmixingModel fit_pca(const WhitenedScores& w)
{
    detail::check_fit_input(w, "fit_pca");
    UnmixingModel u;
    u.method = Method::PCA;
    u.fpca = w.model;
    u.psi = Eigen::MatrixXd::Identity(w.d(), w.d());
    u.component_order.resize(w.d());
    std::iota(u.component_order.begin(), u.component_order.end(), 0);
    u.loadings = unmixing_loadings(*u.fpca, u.psi);
    return u;
}

/// Rotation from the eigenvectors of the FOBI matrix, ordered by decreasing eigenvalue.
inline UnmixingModel fit_fobi(const WhitenedScores& w)
{
    detail::check_fit_input(w, "fit_fobi");
    const EigenDecomp e = sym_eig(fobi_matrix(w));
    UnmixingModel u;
    u.method = Method::FOBI;
    u.fpca = w.model;
    u.psi = e.vectors;
    u.fobi_eigenvalues = e.values;
    u.component_order.resize(w.d());
    std::iota(u.component_order.begin(), u.component_order.end(), 0);

    // Gaps below 1e-4 of the spectrum scale, or below two standard errors of
    // a Gaussian sample excess kurtosis, are indistinguishable from ties.
    const double scale = std::max(e.values.cwiseAbs().maxCoeff(), 1e-300);
    const double noise = 2.0 * std::sqrt(24.0 / w.n());
    const double min_gap = std::max(1e-4 * scale, noise);
    for (Eigen::Index k = 0; k + 1 < e.values.size(); ++k) {
        if (e.values(k) - e.values(k + 1) < min_gap) {
            u.warnings.push_back("FOBI eigenvalues " + std::to_string(k + 1) + " and "
                                 + std::to_string(k + 2)
                                 + " are nearly equal; the corresponding components are not identifiable");
        }
    }
    if (w.model->eigen_gap_warning)
        u.warnings.push_back("FPCA eigenvalue gap at d is tiny; the retained subspace is unstable");
    detail::apply_loading_signs(u);
    return u;
}

/**
 * Rotation jointly diagonalizing all fourth-order cumulant matrices.
 * The k < l matrices are scaled by sqrt(2) so the objective equals the sum
 * over all d^2 ordered pairs. Components are ordered by decreasing
 * |excess kurtosis| of the resulting scores.
 */
inline UnmixingModel fit_jade(const WhitenedScores& w, const JointDiagOptions& jd_opts = {})
{
    detail::check_fit_input(w, "fit_jade");
    const int d = w.d();
    std::vector<Eigen::MatrixXd> mats;
    for (auto& c : jade_cumulants(w.data))
        mats.push_back(c.k == c.l ? std::move(c.data) : std::sqrt(2.0) * c.data);

    UnmixingModel u;
    u.method = Method::JADE;
    u.fpca = w.model;
    Eigen::MatrixXd rotation;
    Eigen::VectorXd contribution;
    if (d == 1) {
        rotation = Eigen::MatrixXd::Identity(1, 1);
        contribution = Eigen::VectorXd::Constant(1, offdiag_objective(mats, rotation));
        u.jd_objective = contribution(0);
    } else {
        const JointDiagResult jd = joint_diagonalize(mats, jd_opts);
        rotation = jd.rotation;
        contribution = jd.column_contribution;
        u.jd_objective = jd.objective;
        u.jd_sweeps = jd.sweeps;
        u.jd_converged = jd.converged;
        if (!jd.converged)
            u.warnings.push_back("joint diagonalization did not converge in "
                                 + std::to_string(jd.sweeps) + " sweeps");
    }

    const Eigen::VectorXd kurt = detail::excess_kurtosis(w.data * rotation).cwiseAbs();
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return kurt(a) > kurt(b); });

    u.psi.resize(d, d);
    u.jd_column_contribution.resize(d);
    for (int r = 0; r < d; ++r) {
        u.psi.col(r) = rotation.col(order[r]);
        u.jd_column_contribution(r) = contribution(order[r]);
    }
    u.component_order = order;
    if (w.model->eigen_gap_warning)
        u.warnings.push_back("FPCA eigenvalue gap at d is tiny; the retained subspace is unstable");
    detail::apply_loading_signs(u);
    return u;
}

inline UnmixingModel fit_method(const WhitenedScores& w, Method m)
{
    switch (m) {
    case Method::PCA: return fit_pca(w);
    case Method::FOBI: return fit_fobi(w);
    case Method::JADE: return fit_jade(w);
    }
    throw InputError("fit_method: unknown method");
}

struct ScoreMatrix {
    Eigen::MatrixXd data;
    Method method = Method::JADE;
    std::shared_ptr<const UnmixingModel> model;
};

/// Independent component scores X W^T, with X centered by the training means.
inline ScoreMatrix component_scores(const CoefMatrix& c, const UnmixingModel& model)
{
    detail::require(model.fpca != nullptr, "component_scores: model has no FPCA part");
    detail::check_model_shape(c, model.fpca->p, model.fpca->K, "component_scores");
    const Eigen::MatrixXd X = detail::training_centered(c, model.fpca->column_means);
    ScoreMatrix s;
    s.data = X * model.loadings.transpose();
    s.method = model.method;
    s.model = std::make_shared<const UnmixingModel>(model);
    return s;
}

} // namespace mfica
