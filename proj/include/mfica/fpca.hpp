#pragma once

#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "mfica/basis.hpp"
#include "mfica/matalg.hpp"

namespace mfica {

/// I_p (x) G as a dense matrix.
inline Eigen::MatrixXd block_diag(int p, const Eigen::MatrixXd& G)
{
    const auto K = G.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p * K, p * K);
    for (int j = 0; j < p; ++j) out.block(j * K, j * K, K, K) = G;
    return out;
}

namespace detail {

inline bool is_identity(const Eigen::MatrixXd& G)
{
    return G.rows() == G.cols() && G.isIdentity(0.0);
}

inline void check_gram(const CoefMatrix& c, const Eigen::MatrixXd& gram, const char* who)
{
    require(gram.rows() == c.K && gram.cols() == c.K,
        std::string(who) + ": Gram matrix must be K x K with K = " + std::to_string(c.K));
}

} // namespace detail

/// Multivariate FPCA fit: leading d eigenfunctions in raw basis coordinates.
struct FpcaModel {
    /// pK x d eigenfunction coordinates, orthonormal in the (I_p (x) G) metric.
    Eigen::MatrixXd phi;
    /// Leading d eigenvalues, non-increasing.
    Eigen::VectorXd lambda;
    /// Full spectrum of the coefficient covariance.
    Eigen::VectorXd spectrum;
    Eigen::MatrixXd gram;
    int p = 0;
    int K = 0;
    int d = 0;
    bool eigen_gap_warning = false;
    /// Column means of the training coefficients.
    Eigen::VectorXd column_means;
    std::optional<BasisSpec> basis;
};

/**
 * Covariance of the centered coefficients in symmetric metric form
 * (I (x) G^{1/2}) (X^T X / n) (I (x) G^{1/2}). Its eigenvectors u map back to
 * function coordinates through (I (x) G^{-1/2}) u.
 */
inline Eigen::MatrixXd coefficient_covariance(const CoefMatrix& c, const Eigen::MatrixXd& gram)
{
    detail::require(c.centered, "coefficient_covariance: coefficients must be centered");
    detail::check_gram(c, gram, "coefficient_covariance");
    detail::require(c.n() >= 1, "coefficient_covariance: empty coefficient matrix");
    Eigen::MatrixXd S = (c.data.transpose() * c.data) / static_cast<double>(c.n());
    if (!detail::is_identity(gram)) {
        const Eigen::MatrixXd half = block_diag(c.p, sym_sqrt(gram));
        S = half * S * half;
    }
    return 0.5 * (S + S.transpose());
}

struct FpcaOptions {
    /// Rank gate for lambda_d. Defaults to 1e-10 * lambda_1.
    std::optional<double> eps;
};

inline FpcaModel fpca_reduce(const CoefMatrix& c, const Eigen::MatrixXd& gram, int d,
                             const FpcaOptions& opts = {})
{
    const int dim = c.cols();
    detail::require(d >= 1 && d <= dim,
        "fpca_reduce: d = " + std::to_string(d) + " must lie in [1, " + std::to_string(dim) + "]");
    detail::require(c.centered, "fpca_reduce: coefficients must be centered");
    detail::check_gram(c, gram, "fpca_reduce");
    detail::require(c.n() >= 1, "fpca_reduce: empty coefficient matrix");
    // Spectrum of coefficient_covariance via the weighted data matrix.
    Eigen::MatrixXd A = c.data / std::sqrt(static_cast<double>(c.n()));
    if (!detail::is_identity(gram)) A = A * block_diag(c.p, sym_sqrt(gram));
    const EigenDecomp e = gram_eig(A);

    const double lambda1 = e.values(0);
    const double eps = opts.eps.value_or(1e-10 * std::max(lambda1, 0.0));
    if (!(e.values(d - 1) > eps) || !(lambda1 > 0.0)) {
        std::ostringstream msg;
        msg << "fpca_reduce: effective dimension below d = " << d << " (lambda_d = "
            << e.values(d - 1) << ", eps = " << eps << "); spectrum:";
        for (Eigen::Index k = 0; k < e.values.size(); ++k) msg << ' ' << e.values(k);
        throw NumericalError(msg.str());
    }

    FpcaModel m;
    m.p = c.p;
    m.K = c.K;
    m.d = d;
    m.gram = gram;
    m.spectrum = e.values;
    m.lambda = e.values.head(d);
    m.column_means = c.column_means;
    if (detail::is_identity(gram)) {
        m.phi = e.vectors.leftCols(d);
    } else {
        const Eigen::MatrixXd inv_half = block_diag(c.p, sym_inv_sqrt(gram, c.K, 0.0));
        m.phi = inv_half * e.vectors.leftCols(d);
    }
    if (d < dim) m.eigen_gap_warning = (e.values(d - 1) - e.values(d)) < 1e-6 * lambda1;
    return m;
}

inline FpcaModel fpca_reduce(const CoefMatrix& c, const BasisSpec& basis, int d,
                             const FpcaOptions& opts = {})
{
    FpcaModel m = fpca_reduce(c, basis.gram, d, opts);
    m.basis = basis;
    return m;
}

/// d x pK whitening map Lambda^{-1/2} Phi^T (I (x) G).
inline Eigen::MatrixXd whitening_map(const FpcaModel& m)
{
    Eigen::MatrixXd metric_phi = detail::is_identity(m.gram) ? m.phi : block_diag(m.p, m.gram) * m.phi;
    return m.lambda.cwiseSqrt().cwiseInverse().asDiagonal() * metric_phi.transpose();
}

struct WhitenedScores {
    Eigen::MatrixXd data;
    std::shared_ptr<const FpcaModel> model;

    int n() const { return static_cast<int>(data.rows()); }
    int d() const { return static_cast<int>(data.cols()); }
};

namespace detail {

inline void check_model_shape(const CoefMatrix& c, int p, int K, const char* who)
{
    require(c.p == p && c.K == K,
        std::string(who) + ": coefficient shape (p = " + std::to_string(c.p) + ", K = "
            + std::to_string(c.K) + ") does not match model (p = " + std::to_string(p)
            + ", K = " + std::to_string(K) + ")");
}

/// Coefficients expressed relative to the training means.
inline Eigen::MatrixXd training_centered(const CoefMatrix& c, const Eigen::VectorXd& means)
{
    if (c.centered && c.column_means.size() == means.size() && c.column_means == means) return c.data;
    return recenter_with(c, means).data;
}

} // namespace detail

/// Scores in the whitened eigenbasis. Input is re-centered with the training
/// means when it was centered differently (or not at all).
inline WhitenedScores whiten(const CoefMatrix& c, const FpcaModel& m)
{
    detail::check_model_shape(c, m.p, m.K, "whiten");
    const Eigen::MatrixXd X = detail::training_centered(c, m.column_means);
    WhitenedScores out;
    out.data = X * whitening_map(m).transpose();
    out.model = std::make_shared<const FpcaModel>(m);
    return out;
}

} // namespace mfica
