#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfica/error.hpp"
#include "mfica/ica.hpp"

namespace mfica {

/// R[m, j] = sum over block j of gain[m, .]^2, blocks of K consecutive columns.
inline Eigen::MatrixXd block_collapse(const Eigen::MatrixXd& gain, int p, int K)
{
    detail::require(p > 0 && K > 0, "block_collapse: p and K must be positive");
    detail::require(gain.cols() == static_cast<Eigen::Index>(p) * K,
        "block_collapse: gain has " + std::to_string(gain.cols()) + " columns, expected p*K = "
            + std::to_string(p * K));
    Eigen::MatrixXd R(gain.rows(), p);
    for (int j = 0; j < p; ++j)
        R.col(j) = gain.middleCols(static_cast<Eigen::Index>(j) * K, K).rowwise().squaredNorm();
    return R;
}

namespace detail {

/// Row-normalized squares: A[i, j] = R[i, j]^2 / |R[i, .]|^2. The best
/// one-to-one assignment of A gives the minimum distance index in closed form.
inline Eigen::MatrixXd mdi_affinity(const Eigen::MatrixXd& R)
{
    require(R.rows() == R.cols() && R.rows() > 0, "minimum_distance_index: R must be square and non-empty");
    require(R.allFinite(), "minimum_distance_index: non-finite entries");
    Eigen::MatrixXd A = R.cwiseAbs2();
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        const double s = A.row(i).sum();
        if (!(s > 0.0))
            throw InputError("minimum_distance_index: row " + std::to_string(i)
                             + " is all zero (component carries no signal)");
        A.row(i) /= s;
    }
    return A;
}

inline double mdi_from_assignment(double best, Eigen::Index p)
{
    if (p == 1) return 0.0;
    const double v = (static_cast<double>(p) - best) / static_cast<double>(p - 1);
    return std::sqrt(std::clamp(v, 0.0, 1.0));
}

/// Maximum-weight perfect matching (Hungarian algorithm, O(p^3)).
inline double max_assignment(const Eigen::MatrixXd& A)
{
    const auto n = static_cast<int>(A.rows());
    const double inf = std::numeric_limits<double>::infinity();
    // Minimize cost = -A with 1-based potentials.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = -A(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += A(match[j] - 1, j - 1);
    return total;
}

inline double max_assignment_enumerate(const Eigen::MatrixXd& A)
{
    std::vector<int> perm(static_cast<std::size_t>(A.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = -std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (Eigen::Index i = 0; i < A.rows(); ++i) s += A(i, perm[i]);
        best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace detail

/**
 * Minimum distance index of a square gain-type matrix,
 * (p-1)^{-1/2} inf_C |C R - I|_F over C with exactly one nonzero per row and
 * column. With the per-row scale optimized in closed form this reduces to
 * sqrt((p - max_perm sum_i A[i, perm(i)]) / (p - 1)) with A the row-normalized
 * squares of R. Enumerates permutations for p <= 8.
 */
inline double minimum_distance_index(const Eigen::MatrixXd& R)
{
    const Eigen::MatrixXd A = detail::mdi_affinity(R);
    const double best = A.rows() <= 8 ? detail::max_assignment_enumerate(A) : detail::max_assignment(A);
    return detail::mdi_from_assignment(best, A.rows());
}

/// Same index through the Hungarian assignment, for any p.
inline double minimum_distance_index_fast(const Eigen::MatrixXd& R)
{
    const Eigen::MatrixXd A = detail::mdi_affinity(R);
    return detail::mdi_from_assignment(detail::max_assignment(A), A.rows());
}

struct GainSummary {
    Eigen::MatrixXd gain;
    Eigen::MatrixXd collapsed;
    double mdi = 0.0;
};

/// Gain W * Omega, its block collapse, and the resulting index.
inline GainSummary summarize_gain(const Eigen::MatrixXd& W, const Eigen::MatrixXd& omega, int p, int K)
{
    detail::require(W.cols() == omega.rows(), "summarize_gain: W and Omega do not conform");
    GainSummary g;
    g.gain = W * omega;
    g.collapsed = block_collapse(g.gain, p, K);
    g.mdi = minimum_distance_index(g.collapsed);
    return g;
}

/// Fourth moments of the standardized score columns, in column order.
inline Eigen::VectorXd standardized_fourth_moments(const Eigen::MatrixXd& scores)
{
    Eigen::VectorXd m4(scores.cols());
    for (Eigen::Index k = 0; k < scores.cols(); ++k) {
        const Eigen::ArrayXd z = scores.col(k).array() - scores.col(k).mean();
        const double var = z.square().mean();
        m4(k) = var > 0.0 ? (z.square() / var).square().mean() : 0.0;
    }
    return m4;
}

/// Score columns ordered by ascending fourth moment of the standardized
/// column (ties by index). Low values flag light-tailed or multimodal scores.
inline std::vector<int> fourth_moment_rank(const Eigen::MatrixXd& scores)
{
    detail::require(scores.rows() >= 4, "fourth_moment_rank: need at least 4 observations");
    const Eigen::VectorXd m4 = standardized_fourth_moments(scores);
    std::vector<int> order(static_cast<std::size_t>(m4.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return m4(a) < m4(b); });
    return order;
}

inline std::vector<int> fourth_moment_rank(const ScoreMatrix& s) { return fourth_moment_rank(s.data); }

} // namespace mfica
