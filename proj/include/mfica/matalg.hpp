#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfica/error.hpp"

namespace mfica {

/// Symmetric eigendecomposition with non-increasing values and a fixed sign
/// convention (largest-|entry| of each vector positive, lowest index on ties).
struct EigenDecomp {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    int source_dim = 0;
    /// Some pair of eigenvalues coincides within 1e-10 relative tolerance.
    bool has_ties = false;
};

namespace detail {

inline double max_abs(const Eigen::MatrixXd& m)
{
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Flip `v` so its largest-magnitude entry is positive.
template <typename Vec>
void canonical_sign(Vec&& v)
{
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v(i)) > std::abs(v(best))) best = i;
    if (v(best) < 0) v = -v;
}

inline Eigen::MatrixXd symmetrize_checked(const Eigen::MatrixXd& S, const char* who)
{
    require(S.rows() == S.cols(), std::string(who) + ": matrix must be square");
    require(S.allFinite(), std::string(who) + ": non-finite entries");
    const double scale = max_abs(S);
    const double asym = max_abs(S - S.transpose());
    require(asym <= 1e-8 * scale,
        std::string(who) + ": matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
    return 0.5 * (S + S.transpose());
}

} // namespace detail

namespace detail {

/// Orders raw eigenpairs by non-increasing value with the canonical sign and
/// a deterministic tie-break on vector entries.
inline EigenDecomp ordered_decomp(const Eigen::VectorXd& vals, Eigen::MatrixXd vecs)
{
    const auto m = static_cast<int>(vals.size());
    EigenDecomp out;
    out.source_dim = static_cast<int>(vecs.rows());
    for (int k = 0; k < m; ++k) canonical_sign(vecs.col(k));

    const double tie_tol = 1e-10 * std::max(vals.cwiseAbs().maxCoeff(), 1e-300);
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (std::abs(vals(a) - vals(b)) > tie_tol) return vals(a) > vals(b);
        for (Eigen::Index r = 0; r < vecs.rows(); ++r)
            if (vecs(r, a) != vecs(r, b)) return vecs(r, a) > vecs(r, b);
        return a < b;
    });

    out.values.resize(m);
    out.vectors.resize(vecs.rows(), m);
    for (int k = 0; k < m; ++k) {
        out.values(k) = vals(order[k]);
        out.vectors.col(k) = vecs.col(order[k]);
    }
    for (int k = 0; k + 1 < m; ++k)
        if (std::abs(out.values(k) - out.values(k + 1)) <= tie_tol) out.has_ties = true;
    return out;
}

} // namespace detail

inline EigenDecomp sym_eig(const Eigen::MatrixXd& S)
{
    const Eigen::MatrixXd A = detail::symmetrize_checked(S, "sym_eig");
    if (A.rows() == 0) return EigenDecomp{};

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A);
    if (solver.info() != Eigen::Success) throw NumericalError("sym_eig: eigensolver failed");
    return detail::ordered_decomp(solver.eigenvalues(), solver.eigenvectors());
}

/**
 * Eigendecomposition of A^T A computed from the singular value decomposition
 * of A, with the same ordering and sign convention as sym_eig. Accuracy of
 * small eigenvalues scales with cond(A) rather than cond(A)^2.
 */
inline EigenDecomp gram_eig(const Eigen::MatrixXd& A)
{
    if (!A.allFinite()) throw InputError("gram_eig: non-finite entry");
    const Eigen::Index m = A.cols();
    if (m == 0) return EigenDecomp{};

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    Eigen::VectorXd vals = Eigen::VectorXd::Zero(m);
    const Eigen::VectorXd& sv = svd.singularValues();
    vals.head(sv.size()) = sv.cwiseAbs2();
    return detail::ordered_decomp(vals, svd.matrixV());
}

/// Rank-d inverse square root sum_{k<=d} lambda_k^{-1/2} phi_k phi_k^T.
inline Eigen::MatrixXd sym_inv_sqrt(const Eigen::MatrixXd& S, int d, double eps)
{
    const EigenDecomp e = sym_eig(S);
    detail::require(d >= 1 && d <= e.source_dim, "sym_inv_sqrt: d out of range");
    const double lambda_d = e.values(d - 1);
    if (!(lambda_d > eps))
        throw NumericalError("sym_inv_sqrt: effective rank below d (lambda_d = "
                             + std::to_string(lambda_d) + ", eps = " + std::to_string(eps) + ")");
    const auto V = e.vectors.leftCols(d);
    return V * e.values.head(d).cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
}

/// Symmetric PSD square root. Negative eigenvalues from rounding are clamped.
inline Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& S)
{
    const EigenDecomp e = sym_eig(S);
    const Eigen::VectorXd r = e.values.cwiseMax(0.0).cwiseSqrt();
    return e.vectors * r.asDiagonal() * e.vectors.transpose();
}

/// w(V) = sum_i sum_k (v_k^T S_i v_k)^2.
inline double offdiag_objective(std::span<const Eigen::MatrixXd> mats, const Eigen::MatrixXd& V)
{
    double w = 0.0;
    for (const auto& S : mats) {
        detail::require(S.rows() == V.rows() && S.cols() == V.rows(),
            "offdiag_objective: dimension mismatch");
        w += (V.transpose() * S * V).diagonal().squaredNorm();
    }
    return w;
}

struct JointDiagOptions {
    double tol = 1e-8;
    int max_sweeps = 100;
};

struct JointDiagResult {
    Eigen::MatrixXd rotation;
    double objective = 0.0;
    int sweeps = 0;
    bool converged = false;
    /// Objective after each completed sweep; entry 0 is the starting value.
    std::vector<double> history;
    /// Per-column share of the objective, in final column order.
    Eigen::VectorXd column_contribution;
};

/**
 * Orthogonal joint diagonalization by Jacobi (Givens) sweeps, maximizing the
 * summed squared diagonals of V^T S_i V.
 *
 * For each pair (p, q) the angle is the closed-form maximizer of the
 * pairwise objective: with g_i = (s_pp - s_qq, 2 s_pq) and G = sum g_i g_i^T,
 * (cos 2t, sin 2t) is the leading eigenvector of G. Each rotation can only
 * increase the objective. Converged when a full sweep makes no rotation with
 * |angle| >= tol.
 *
 * Output columns are sorted by decreasing contribution to the objective and
 * signed so their largest-|entry| is positive.
 */
inline JointDiagResult joint_diagonalize(std::span<const Eigen::MatrixXd> mats,
                                         const JointDiagOptions& opts = {})
{
    detail::require(!mats.empty(), "joint_diagonalize: need at least one matrix");
    const auto d = mats.front().rows();
    detail::require(d >= 2, "joint_diagonalize: dimension must be at least 2");

    std::vector<Eigen::MatrixXd> A;
    A.reserve(mats.size());
    for (const auto& S : mats) {
        detail::require(S.rows() == d && S.cols() == d, "joint_diagonalize: dimension mismatch");
        A.push_back(detail::symmetrize_checked(S, "joint_diagonalize"));
    }

    auto diag_energy = [&] {
        double w = 0.0;
        for (const auto& M : A) w += M.diagonal().squaredNorm();
        return w;
    };

    JointDiagResult res;
    Eigen::MatrixXd V = Eigen::MatrixXd::Identity(d, d);
    res.history.push_back(diag_energy());

    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        bool rotated = false;
        for (Eigen::Index p = 0; p < d - 1; ++p) {
            for (Eigen::Index q = p + 1; q < d; ++q) {
                double g00 = 0.0, g01 = 0.0, g11 = 0.0;
                for (const auto& M : A) {
                    const double a = M(p, p) - M(q, q);
                    const double b = 2.0 * M(p, q);
                    g00 += a * a;
                    g01 += a * b;
                    g11 += b * b;
                }
                const double theta = 0.25 * std::atan2(2.0 * g01, g00 - g11);
                if (!(std::abs(theta) >= opts.tol)) continue;
                rotated = true;
                const double c = std::cos(theta);
                const double s = std::sin(theta);
                for (auto& M : A) {
                    // M <- J^T M J with J = [c -s; s c] on (p, q)
                    const Eigen::VectorXd cp = M.col(p), cq = M.col(q);
                    M.col(p) = c * cp + s * cq;
                    M.col(q) = c * cq - s * cp;
                    const Eigen::RowVectorXd rp = M.row(p), rq = M.row(q);
                    M.row(p) = c * rp + s * rq;
                    M.row(q) = c * rq - s * rp;
                }
                const Eigen::VectorXd vp = V.col(p), vq = V.col(q);
                V.col(p) = c * vp + s * vq;
                V.col(q) = c * vq - s * vp;
            }
        }
        res.sweeps = sweep + 1;
        res.history.push_back(diag_energy());
        if (!rotated) {
            res.converged = true;
            break;
        }
    }

    Eigen::VectorXd contrib = Eigen::VectorXd::Zero(d);
    for (const auto& M : A) contrib += M.diagonal().cwiseAbs2();

    std::vector<Eigen::Index> order(d);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return contrib(a) > contrib(b); });

    res.rotation.resize(d, d);
    res.column_contribution.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        res.rotation.col(k) = V.col(order[k]);
        detail::canonical_sign(res.rotation.col(k));
        res.column_contribution(k) = contrib(order[k]);
    }
    res.objective = offdiag_objective(mats, res.rotation);
    return res;
}

} // namespace mfica
