#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mfica/eval.hpp"
#include "mfica/ica.hpp"
#include "test_util.hpp"

using namespace mfica;
using mfica::testing::distinct_kurtosis_sources;
using mfica::testing::is_abs_permutation;
using mfica::testing::max_abs;
using mfica::testing::random_normal;
using mfica::testing::random_orthogonal;
using mfica::testing::whiten_full;

namespace {

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& Z)
{
    return Z.transpose() * Z / static_cast<double>(Z.rows());
}

// Element-by-element evaluation of the cumulant formula.
double naive_cumulant_entry(const Eigen::MatrixXd& X, int k, int l, int a, int b)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) s += X(i, k) * X(i, l) * X(i, a) * X(i, b);
    s /= static_cast<double>(X.rows());
    if (k == l && a == b) s -= 1.0;
    if (a == k && b == l) s -= 1.0;
    if (a == l && b == k) s -= 1.0;
    return s;
}

WhitenedScores whitened_sources(std::mt19937_64& gen, int n, int d)
{
    return whiten_full(distinct_kurtosis_sources(gen, n, d), 1, d);
}

double gain_mdi(const UnmixingModel& u)
{
    const Eigen::MatrixXd gain = u.loadings;
    return minimum_distance_index(block_collapse(gain, static_cast<int>(gain.cols()), 1));
}

} // namespace

TEST(Method, ParsesCaseInsensitively)
{
    EXPECT_EQ(parse_method("fobi"), Method::FOBI);
    EXPECT_EQ(parse_method("JADE"), Method::JADE);
    EXPECT_EQ(parse_method("Pca"), Method::PCA);
    EXPECT_THROW(parse_method("fastica"), InputError);
    EXPECT_STREQ(to_string(Method::JADE), "JADE");
}

TEST(FobiMatrix, SymmetricBernoulliHandValue)
{
    Eigen::MatrixXd X(4, 1);
    X << 1, -1, 1, -1;
    EXPECT_DOUBLE_EQ(fobi_matrix(X)(0, 0), -2.0);
}

TEST(FobiMatrix, GaussianIsNearZero)
{
    std::mt19937_64 gen(1);
    const WhitenedScores w = whiten_full(random_normal(gen, 100000, 4), 1, 4);
    EXPECT_LT(max_abs(fobi_matrix(w)), 0.05);
}

TEST(FobiMatrix, EqualsSumOfDiagonalCumulants)
{
    std::mt19937_64 gen(2);
    for (int trial = 0; trial < 5; ++trial) {
        const int d = 2 + trial;
        const Eigen::MatrixXd X = distinct_kurtosis_sources(gen, 300, d);
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
        for (int k = 0; k < d; ++k) sum += jade_cumulant(X, k, k).data;
        EXPECT_LT(max_abs(fobi_matrix(X) - sum), 1e-10);
    }
}

TEST(FobiMatrix, OrthogonalEquivariance)
{
    std::mt19937_64 gen(3);
    const Eigen::MatrixXd X = distinct_kurtosis_sources(gen, 500, 5);
    const Eigen::MatrixXd Q = random_orthogonal(gen, 5);
    const Eigen::MatrixXd lhs = fobi_matrix(X * Q.transpose());
    EXPECT_LT(max_abs(lhs - Q * fobi_matrix(X) * Q.transpose()), 1e-10);
}

TEST(JadeCumulant, MatchesQuadrupleLoopOracle)
{
    std::mt19937_64 gen(4);
    const Eigen::MatrixXd X = random_normal(gen, 200, 4);
    for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
            const CumulantMatrix c = jade_cumulant(X, k, l);
            EXPECT_EQ(c.k, k);
            EXPECT_EQ(c.l, l);
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    EXPECT_NEAR(c.data(a, b), naive_cumulant_entry(X, k, l, a, b), 1e-10);
        }
}

TEST(JadeCumulant, SymmetricInIndexPair)
{
    std::mt19937_64 gen(5);
    const Eigen::MatrixXd X = random_normal(gen, 100, 3);
    for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
            const Eigen::MatrixXd a = jade_cumulant(X, k, l).data;
            EXPECT_TRUE(a == jade_cumulant(X, l, k).data);
            EXPECT_TRUE(a == a.transpose());
        }
}

TEST(JadeCumulant, GaussianIsNearZero)
{
    std::mt19937_64 gen(6);
    const WhitenedScores w = whiten_full(random_normal(gen, 100000, 4), 1, 4);
    for (const auto& c : jade_cumulants(w.data)) EXPECT_LT(max_abs(c.data), 0.05);
}

TEST(JadeCumulant, RejectsOutOfRangeIndex)
{
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 3);
    EXPECT_THROW(jade_cumulant(X, 3, 0), InputError);
    EXPECT_THROW(jade_cumulant(X, 0, -1), InputError);
}

TEST(JadeCumulants, UpperTriangleCount)
{
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 4);
    const auto all = jade_cumulants(X);
    ASSERT_EQ(all.size(), 10u);
    for (const auto& c : all) EXPECT_LE(c.k, c.l);
}

TEST(FitFobi, SeparatesDistinctKurtosisSources)
{
    std::mt19937_64 gen(7);
    const WhitenedScores w = whitened_sources(gen, 8000, 4);
    const UnmixingModel u = fit_fobi(w);
    EXPECT_LT(gain_mdi(u), 0.1);
    ASSERT_TRUE(u.fobi_eigenvalues.has_value());
    for (int k = 0; k + 1 < 4; ++k) EXPECT_GE((*u.fobi_eigenvalues)(k), (*u.fobi_eigenvalues)(k + 1));
    EXPECT_TRUE(u.warnings.empty());
}

TEST(FitFobi, GaussianDataRaisesGapWarning)
{
    std::mt19937_64 gen(8);
    const WhitenedScores w = whiten_full(random_normal(gen, 5000, 4), 1, 4);
    const UnmixingModel u = fit_fobi(w);
    EXPECT_LT(u.fobi_eigenvalues->cwiseAbs().maxCoeff(), 1.0);
    EXPECT_FALSE(u.warnings.empty());
}

TEST(FitJade, SeparatesDistinctKurtosisSources)
{
    std::mt19937_64 gen(9);
    const WhitenedScores w = whitened_sources(gen, 8000, 5);
    const UnmixingModel u = fit_jade(w);
    EXPECT_TRUE(u.jd_converged);
    EXPECT_LT(gain_mdi(u), 0.1);
}

TEST(FitJade, ObjectiveMatchesRecomputation)
{
    std::mt19937_64 gen(10);
    const WhitenedScores w = whitened_sources(gen, 1000, 4);
    const UnmixingModel u = fit_jade(w);
    std::vector<Eigen::MatrixXd> mats;
    for (const auto& c : jade_cumulants(w.data)) mats.push_back(c.k == c.l ? c.data : std::sqrt(2.0) * c.data);
    EXPECT_NEAR(u.jd_objective, offdiag_objective(mats, u.psi), 1e-9);
    // The k <= l family with sqrt(2) weights has the same objective as all d^2 matrices.
    std::vector<Eigen::MatrixXd> full;
    for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) full.push_back(jade_cumulant(w.data, k, l).data);
    EXPECT_NEAR(u.jd_objective, offdiag_objective(full, u.psi), 1e-9);
}

TEST(FitJade, OrdersByDescendingAbsoluteKurtosis)
{
    std::mt19937_64 gen(11);
    const WhitenedScores w = whitened_sources(gen, 4000, 5);
    const UnmixingModel u = fit_jade(w);
    const Eigen::MatrixXd Z = w.data * u.psi;
    const Eigen::VectorXd kurt = (Z.array().pow(4).colwise().mean() - 3.0).abs().transpose();
    for (int k = 0; k + 1 < 5; ++k) EXPECT_GE(kurt(k), kurt(k + 1));
    std::vector<int> sorted = u.component_order;
    std::sort(sorted.begin(), sorted.end());
    for (int k = 0; k < 5; ++k) EXPECT_EQ(sorted[k], k);
}

TEST(FitJade, SingleDimension)
{
    std::mt19937_64 gen(12);
    const WhitenedScores w = whitened_sources(gen, 100, 1);
    const UnmixingModel u = fit_jade(w);
    EXPECT_EQ(u.psi.rows(), 1);
    EXPECT_NEAR(std::abs(u.psi(0, 0)), 1.0, 0.0);
}

TEST(FitJade, ReportsNonConvergence)
{
    std::mt19937_64 gen(13);
    const WhitenedScores w = whitened_sources(gen, 500, 6);
    const UnmixingModel u = fit_jade(w, JointDiagOptions{1e-8, 1});
    EXPECT_FALSE(u.jd_converged);
    EXPECT_FALSE(u.warnings.empty());
}

TEST(FitMethods, RejectTooFewObservations)
{
    std::mt19937_64 gen(14);
    const CoefMatrix c = center_coefficients(make_coef_matrix(random_normal(gen, 4, 4), 1, 4));
    const FpcaModel m = fpca_reduce(c, Eigen::MatrixXd::Identity(4, 4), 3);
    const WhitenedScores w = whiten(c, m);
    EXPECT_NO_THROW(fit_fobi(w));
    WhitenedScores small = w;
    small.data = w.data.topRows(3);
    EXPECT_THROW(fit_fobi(small), InputError);
    EXPECT_THROW(fit_jade(small), InputError);
}

TEST(UnmixingModelInvariants, AcrossMethodsAndShapes)
{
    std::mt19937_64 gen(15);
    for (int trial = 0; trial < 6; ++trial) {
        const int p = 1 + trial % 3, K = 3, d = 2 + trial % 2;
        Eigen::MatrixXd X = distinct_kurtosis_sources(gen, 600, p * K) * random_normal(gen, p * K, p * K);
        const CoefMatrix c = center_coefficients(make_coef_matrix(X, p, K));
        const Eigen::MatrixXd G = mfica::testing::random_spd(gen, K);
        const FpcaModel m = fpca_reduce(c, G, d);
        const WhitenedScores w = whiten(c, m);
        for (Method method : {Method::PCA, Method::FOBI, Method::JADE}) {
            const UnmixingModel u = fit_method(w, method);
            EXPECT_EQ(u.method, method);
            EXPECT_LT(max_abs(u.psi.transpose() * u.psi - Eigen::MatrixXd::Identity(d, d)), 1e-8);
            const Eigen::MatrixXd rebuilt = u.psi.transpose() * m.lambda.cwiseSqrt().cwiseInverse().asDiagonal()
                                            * m.phi.transpose() * block_diag(p, G);
            EXPECT_LT(max_abs(u.loadings - rebuilt), 1e-10);
            EXPECT_LT(max_abs(c.data * u.loadings.transpose() - w.data * u.psi), 1e-10);
            const ScoreMatrix s = component_scores(c, u);
            EXPECT_LT(max_abs(sample_cov(s.data) - Eigen::MatrixXd::Identity(d, d)), 1e-8);
            if (method == Method::PCA) continue;
            for (Eigen::Index r = 0; r < u.loadings.rows(); ++r) {
                Eigen::Index idx;
                u.loadings.row(r).cwiseAbs().maxCoeff(&idx);
                EXPECT_GT(u.loadings(r, idx), 0.0);
            }
        }
    }
}

TEST(UnmixingLoadings, IdentityRotationIsWhiteningMap)
{
    std::mt19937_64 gen(16);
    const CoefMatrix c = center_coefficients(make_coef_matrix(random_normal(gen, 100, 33), 3, 11));
    const FpcaModel m = fpca_reduce(c, Eigen::MatrixXd::Identity(11, 11), 3);
    const Eigen::MatrixXd W = unmixing_loadings(m, Eigen::MatrixXd::Identity(3, 3));
    EXPECT_EQ(W.rows(), 3);
    EXPECT_EQ(W.cols(), 33);
    EXPECT_TRUE(W == whitening_map(m));
    EXPECT_THROW(unmixing_loadings(m, Eigen::MatrixXd::Identity(2, 2)), InputError);
}

TEST(ComponentScores, TrainingRowReproducesScoreRow)
{
    std::mt19937_64 gen(17);
    const Eigen::MatrixXd raw = (random_normal(gen, 200, 6).array() + 5.0).matrix();
    const CoefMatrix c = center_coefficients(make_coef_matrix(raw, 2, 3));
    const WhitenedScores w = whiten(c, fpca_reduce(c, Eigen::MatrixXd::Identity(3, 3), 4));
    const UnmixingModel u = fit_jade(w);
    const ScoreMatrix all = component_scores(c, u);
    const ScoreMatrix one = component_scores(make_coef_matrix(raw.row(42), 2, 3), u);
    EXPECT_LT(max_abs(one.data - all.data.row(42)), 1e-12);
    EXPECT_THROW(component_scores(make_coef_matrix(raw.leftCols(3), 1, 3), u), InputError);
}

TEST(ComponentScores, IdentityMixingRecoversSources)
{
    std::mt19937_64 gen(18);
    const int p = 2, K = 3;
    const Eigen::MatrixXd Z = distinct_kurtosis_sources(gen, 8000, p * K);
    const WhitenedScores w = whiten_full(Z, p, K);
    for (Method method : {Method::FOBI, Method::JADE}) {
        const UnmixingModel u = fit_method(w, method);
        EXPECT_LT(minimum_distance_index(block_collapse(u.loadings, p * K, 1)), 0.1) << to_string(method);
    }
}

TEST(AffineInvariance, ScoresUnchangedUpToSignedPermutation)
{
    std::mt19937_64 gen(19);
    const int p = 2, K = 3, n = 4000, dim = p * K;
    const Eigen::MatrixXd X = distinct_kurtosis_sources(gen, n, dim);
    const CoefMatrix c = center_coefficients(make_coef_matrix(X, p, K));
    for (Method method : {Method::FOBI, Method::JADE}) {
        const ScoreMatrix base = component_scores(c, fit_method(whiten_full(X, p, K), method));
        for (int trial = 0; trial < 3; ++trial) {
            const Eigen::MatrixXd omega = random_normal(gen, dim, dim);
            const Eigen::MatrixXd Y = X * omega.transpose();
            const CoefMatrix cy = center_coefficients(make_coef_matrix(Y, p, K));
            const ScoreMatrix mixed = component_scores(cy, fit_method(whiten_full(Y, p, K), method));
            const Eigen::MatrixXd cross = base.data.transpose() * mixed.data / static_cast<double>(n);
            EXPECT_TRUE(is_abs_permutation(cross, 1e-6)) << to_string(method) << " trial " << trial << "\n" << cross;
            // Match columns and compare entrywise.
            for (int a = 0; a < dim; ++a) {
                Eigen::Index b;
                cross.row(a).cwiseAbs().maxCoeff(&b);
                const double sign = cross(a, b) > 0 ? 1.0 : -1.0;
                EXPECT_LT((base.data.col(a) - sign * mixed.data.col(b)).cwiseAbs().maxCoeff(), 1e-6);
            }
        }
    }
}
