#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfica/error.hpp"

namespace mfica {

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    double length() const { return hi - lo; }
    bool contains(double t) const { return t >= lo && t <= hi; }
};

enum class BasisKind { Fourier };

inline const char* to_string(BasisKind kind)
{
    switch (kind) {
    case BasisKind::Fourier: return "fourier";
    }
    return "unknown";
}

/**
 * A K-element function basis on an interval together with its Gram matrix
 * (the pairwise L2 inner products of the basis functions).
 *
 * Coefficient algebra throughout the library carries the Gram matrix
 * explicitly, so a non-orthonormal basis flows through unchanged even though
 * the only kind currently provided is the orthonormal Fourier basis.
 */
struct BasisSpec {
    BasisKind kind = BasisKind::Fourier;
    int K = 1;
    Interval interval;
    Eigen::MatrixXd gram;
};

/// Orthonormal Fourier basis: constant, then interleaved (sin, cos) pairs of
/// increasing frequency. K must be odd.
inline BasisSpec fourier_basis(int K, Interval interval)
{
    detail::require(K > 0, "fourier_basis: K must be positive");
    detail::require(K % 2 == 1,
        "fourier_basis: K must be odd (one constant plus sine/cosine pairs), got "
            + std::to_string(K));
    detail::require(interval.hi > interval.lo, "fourier_basis: interval must satisfy a < b");
    BasisSpec b;
    b.kind = BasisKind::Fourier;
    b.K = K;
    b.interval = interval;
    b.gram = Eigen::MatrixXd::Identity(K, K);
    return b;
}

namespace detail {

inline void fourier_values(int K, Interval iv, double t, double* out)
{
    const double L = iv.length();
    const double x = (t - iv.lo) / L;
    out[0] = 1.0 / std::sqrt(L);
    const double amp = std::sqrt(2.0 / L);
    for (int k = 1; 2 * k - 1 < K; ++k) {
        const double arg = 2.0 * std::numbers::pi * k * x;
        out[2 * k - 1] = amp * std::sin(arg);
        out[2 * k] = amp * std::cos(arg);
    }
}

} // namespace detail

/// (g_1(t), ..., g_K(t)). Rejects t outside the basis interval.
inline Eigen::VectorXd eval_basis(const BasisSpec& b, double t)
{
    if (!std::isfinite(t) || !b.interval.contains(t))
        throw InputError("eval_basis: t = " + std::to_string(t) + " lies outside ["
                         + std::to_string(b.interval.lo) + ", " + std::to_string(b.interval.hi) + "]");
    Eigen::VectorXd v(b.K);
    switch (b.kind) {
    case BasisKind::Fourier: detail::fourier_values(b.K, b.interval, t, v.data()); break;
    }
    return v;
}

/// Gram matrix by composite trapezoid quadrature on `quad_points` equispaced nodes.
inline Eigen::MatrixXd quadrature_gram(const BasisSpec& b, int quad_points)
{
    detail::require(quad_points >= 2 * b.K, "quadrature_gram: need at least 2K quadrature points");
    const double h = b.interval.length() / (quad_points - 1);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(b.K, b.K);
    for (int m = 0; m < quad_points; ++m) {
        const double t = (m == quad_points - 1) ? b.interval.hi : b.interval.lo + m * h;
        const Eigen::VectorXd g = eval_basis(b, t);
        const double w = (m == 0 || m == quad_points - 1) ? 0.5 * h : h;
        G.noalias() += w * g * g.transpose();
    }
    return G;
}

/// Gram matrix of the basis. Orthonormal kinds return the analytic identity;
/// anything else falls back to quadrature.
inline Eigen::MatrixXd gram_matrix(const BasisSpec& b, int quad_points)
{
    detail::require(quad_points >= 2 * b.K, "gram_matrix: need at least 2K quadrature points");
    if (b.kind == BasisKind::Fourier)
        return Eigen::MatrixXd::Identity(b.K, b.K);
    return quadrature_gram(b, quad_points);
}

/// Samples of one component curve of one observation.
struct CurveSamples {
    std::vector<double> t;
    std::vector<double> value;
};

/**
 * Raw discretely observed multivariate curves. cells[i][j] holds observation
 * i, component j. Time grids may differ between cells.
 */
struct SampledCurveSet {
    int n = 0;
    int p = 0;
    std::vector<std::vector<CurveSamples>> cells;

    const CurveSamples& cell(int i, int j) const { return cells[i][j]; }
};

/**
 * n x pK coefficient matrix, component-major columns: columns
 * [j*K, (j+1)*K) belong to component j.
 */
struct CoefMatrix {
    Eigen::MatrixXd data;
    int p = 0;
    int K = 0;
    bool centered = false;
    Eigen::VectorXd column_means;

    int n() const { return static_cast<int>(data.rows()); }
    int cols() const { return p * K; }
};

inline CoefMatrix make_coef_matrix(Eigen::MatrixXd data, int p, int K)
{
    detail::require(p > 0 && K > 0, "coefficient matrix: p and K must be positive");
    detail::require(data.cols() == static_cast<Eigen::Index>(p) * K,
        "coefficient matrix: expected " + std::to_string(p * K) + " columns, got "
            + std::to_string(data.cols()));
    CoefMatrix c;
    c.p = p;
    c.K = K;
    c.column_means = Eigen::VectorXd::Zero(p * K);
    c.data = std::move(data);
    return c;
}

inline void validate_curves(const SampledCurveSet& curves, const BasisSpec& b)
{
    detail::require(curves.n >= 1 && curves.p >= 1, "curves: need n >= 1 and p >= 1");
    detail::require(static_cast<int>(curves.cells.size()) == curves.n, "curves: row count mismatch");
    for (int i = 0; i < curves.n; ++i) {
        detail::require(static_cast<int>(curves.cells[i].size()) == curves.p,
            "curves: observation " + std::to_string(i) + " does not have p components");
        for (int j = 0; j < curves.p; ++j) {
            const CurveSamples& s = curves.cells[i][j];
            const std::string where = "(observation " + std::to_string(i) + ", component "
                                      + std::to_string(j + 1) + ")";
            detail::require(!s.t.empty() && s.t.size() == s.value.size(),
                "curves: empty or ragged cell " + where);
            for (std::size_t m = 0; m < s.t.size(); ++m) {
                detail::require(std::isfinite(s.t[m]) && b.interval.contains(s.t[m]),
                    "curves: time point outside basis interval in cell " + where);
                detail::require(std::isfinite(s.value[m]), "curves: non-finite value in cell " + where);
            }
        }
    }
}

struct FitOptions {
    /// Optional ridge penalty on the coefficients. Zero means plain least
    /// squares, where underdetermined cells are an error.
    double ridge = 0.0;
};

/**
 * Least-squares basis coefficients for every (observation, component) cell.
 * Uses column-pivoted QR with a relative rank tolerance of 1e-10. The result
 * is not centered.
 */
inline CoefMatrix fit_coefficients(const SampledCurveSet& curves, const BasisSpec& b,
                                   const FitOptions& opts = {})
{
    validate_curves(curves, b);
    detail::require(opts.ridge >= 0.0, "fit_coefficients: ridge must be non-negative");
    const int K = b.K;
    Eigen::MatrixXd out(curves.n, curves.p * K);

    for (int i = 0; i < curves.n; ++i) {
        for (int j = 0; j < curves.p; ++j) {
            const CurveSamples& s = curves.cell(i, j);
            const auto M = static_cast<Eigen::Index>(s.t.size());
            const std::string where = "(observation " + std::to_string(i) + ", component "
                                      + std::to_string(j + 1) + ")";
            if (opts.ridge == 0.0 && M < K)
                throw InputError("fit_coefficients: cell " + where + " has " + std::to_string(M)
                                 + " points, fewer than K = " + std::to_string(K));
            Eigen::MatrixXd A(M, K);
            for (Eigen::Index m = 0; m < M; ++m) A.row(m) = eval_basis(b, s.t[m]).transpose();
            const Eigen::Map<const Eigen::VectorXd> y(s.value.data(), M);

            Eigen::VectorXd coef;
            if (opts.ridge > 0.0) {
                Eigen::MatrixXd N = A.transpose() * A;
                N.diagonal().array() += opts.ridge;
                coef = N.ldlt().solve(A.transpose() * y);
            } else {
                Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
                qr.setThreshold(1e-10);
                if (qr.rank() < K)
                    throw InputError("fit_coefficients: rank-deficient design in cell " + where
                                     + " (rank " + std::to_string(qr.rank()) + " < K = "
                                     + std::to_string(K) + ")");
                coef = qr.solve(y);
            }
            out.block(i, static_cast<Eigen::Index>(j) * K, 1, K) = coef.transpose();
        }
    }
    return make_coef_matrix(std::move(out), curves.p, K);
}

/// Subtract column means. Idempotent: means of an already-centered matrix are
/// accumulated onto the stored means rather than replacing them.
inline CoefMatrix center_coefficients(const CoefMatrix& c)
{
    detail::require(c.n() >= 2, "center_coefficients: need at least 2 observations");
    CoefMatrix out = c;
    const Eigen::RowVectorXd mean = c.data.colwise().mean();
    out.data.rowwise() -= mean;
    out.column_means = (c.column_means.size() == mean.size() ? c.column_means : Eigen::VectorXd::Zero(mean.size()))
                       + mean.transpose();
    out.centered = true;
    return out;
}

/// Express `c` relative to `means`: adds back its own stored means and
/// subtracts the supplied ones.
inline CoefMatrix recenter_with(const CoefMatrix& c, const Eigen::VectorXd& means)
{
    detail::require(means.size() == c.cols(), "recenter_with: mean vector length mismatch");
    CoefMatrix out = c;
    const Eigen::VectorXd shift = c.column_means - means;
    out.data.rowwise() += shift.transpose();
    out.column_means = means;
    out.centered = true;
    return out;
}

} // namespace mfica
