#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mfica/matalg.hpp"
#include "test_util.hpp"

using namespace mfica;
using mfica::testing::is_abs_permutation;
using mfica::testing::max_abs;
using mfica::testing::random_normal;
using mfica::testing::random_orthogonal;
using mfica::testing::random_spd;

namespace {

double hs_total(const std::vector<Eigen::MatrixXd>& mats)
{
    double s = 0.0;
    for (const auto& m : mats) s += m.squaredNorm();
    return s;
}

std::vector<Eigen::MatrixXd> random_symmetric_family(std::mt19937_64& gen, int count, int d)
{
    std::vector<Eigen::MatrixXd> out;
    for (int i = 0; i < count; ++i) {
        const Eigen::MatrixXd a = random_normal(gen, d, d);
        out.push_back(a + a.transpose());
    }
    return out;
}

} // namespace

TEST(SymEig, DiagonalInputSortsDescending)
{
    const EigenDecomp e = sym_eig(Eigen::Vector3d(3.0, 1.0, 2.0).asDiagonal());
    EXPECT_EQ(e.values, Eigen::Vector3d(3.0, 2.0, 1.0));
    Eigen::Matrix3d expected;
    expected << 1, 0, 0, 0, 0, 1, 0, 1, 0;
    EXPECT_LT(max_abs(e.vectors - expected), 1e-15);
    EXPECT_FALSE(e.has_ties);
}

TEST(SymEig, IdentityHasUnitSpectrumAndTies)
{
    const EigenDecomp e = sym_eig(Eigen::MatrixXd::Identity(4, 4));
    EXPECT_LT((e.values - Eigen::VectorXd::Ones(4)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_TRUE(e.has_ties);
}

TEST(SymEig, RandomSpdReconstructionAndConventions)
{
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd S = random_spd(gen, 6);
        const EigenDecomp e = sym_eig(S);
        EXPECT_EQ(e.source_dim, 6);
        EXPECT_LT(max_abs(e.vectors * e.values.asDiagonal() * e.vectors.transpose() - S), 1e-8 * max_abs(S));
        EXPECT_LT(max_abs(e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(6, 6)), 1e-10);
        for (int k = 0; k + 1 < 6; ++k) EXPECT_GE(e.values(k), e.values(k + 1));
        for (int k = 0; k < 6; ++k) {
            Eigen::Index idx;
            e.vectors.col(k).cwiseAbs().maxCoeff(&idx);
            EXPECT_GT(e.vectors(idx, k), 0.0);
        }
    }
}

TEST(SymEig, BitwiseDeterministic)
{
    std::mt19937_64 gen(2);
    const Eigen::MatrixXd S = random_spd(gen, 7);
    const EigenDecomp a = sym_eig(S);
    const EigenDecomp b = sym_eig(S);
    EXPECT_TRUE(a.values == b.values);
    EXPECT_TRUE(a.vectors == b.vectors);
}

TEST(SymEig, RejectsBadInput)
{
    Eigen::Matrix2d S;
    S << 1, 2, 2, std::nan("");
    EXPECT_THROW(sym_eig(S), InputError);
    S << 1, 2, 2.5, 1;
    EXPECT_THROW(sym_eig(S), InputError);
    EXPECT_THROW(sym_eig(Eigen::MatrixXd::Ones(2, 3)), InputError);
}

TEST(SymEig, SymmetrizesRoundingLevelAsymmetry)
{
    Eigen::Matrix2d S;
    S << 2, 1, 1 + 1e-12, 3;
    EXPECT_NO_THROW(sym_eig(S));
}

TEST(SymInvSqrt, IdentityAndDiagonal)
{
    EXPECT_LT(max_abs(sym_inv_sqrt(Eigen::MatrixXd::Identity(3, 3), 3, 1e-12) - Eigen::MatrixXd::Identity(3, 3)), 1e-15);
    const Eigen::MatrixXd M = sym_inv_sqrt(Eigen::Vector2d(4.0, 1.0).asDiagonal(), 2, 1e-12);
    EXPECT_LT(max_abs(M - Eigen::Matrix2d(Eigen::Vector2d(0.5, 1.0).asDiagonal())), 1e-15);
}

TEST(SymInvSqrt, RankDProjectorIdentity)
{
    std::mt19937_64 gen(3);
    const Eigen::MatrixXd S = random_spd(gen, 5);
    const Eigen::MatrixXd M = sym_inv_sqrt(S, 3, 1e-12);
    const EigenDecomp e = sym_eig(S);
    const Eigen::MatrixXd P = e.vectors.leftCols(3) * e.vectors.leftCols(3).transpose();
    EXPECT_LT(max_abs(M * S * M - P), 1e-8);
}

TEST(SymInvSqrt, RejectsRankBelowD)
{
    try {
        sym_inv_sqrt(Eigen::Vector3d(1.0, 1e-14, 0.0).asDiagonal(), 2, 1e-10);
        FAIL() << "expected rejection";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("effective rank below d"), std::string::npos);
    }
}

TEST(SymSqrt, SquaresBack)
{
    std::mt19937_64 gen(4);
    const Eigen::MatrixXd S = random_spd(gen, 4);
    const Eigen::MatrixXd R = sym_sqrt(S);
    EXPECT_LT(max_abs(R - R.transpose()), 1e-12);
    EXPECT_LT(max_abs(R * R - S), 1e-10);
}

TEST(OffdiagObjective, HandValues)
{
    const std::vector<Eigen::MatrixXd> one{Eigen::Vector2d(2.0, 3.0).asDiagonal()};
    EXPECT_DOUBLE_EQ(offdiag_objective(one, Eigen::Matrix2d::Identity()), 13.0);

    const double c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
    Eigen::Matrix2d R;
    R << c, -s, s, c;
    const std::vector<Eigen::MatrixXd> flip{Eigen::Vector2d(1.0, -1.0).asDiagonal()};
    EXPECT_NEAR(offdiag_objective(flip, R), 0.0, 1e-15);
}

TEST(OffdiagObjective, InvariantUnderSignedColumnPermutation)
{
    std::mt19937_64 gen(5);
    const auto mats = random_symmetric_family(gen, 3, 4);
    const Eigen::MatrixXd V = random_orthogonal(gen, 4);
    Eigen::MatrixXd V2(4, 4);
    V2 << V.col(2), -V.col(0), V.col(3), -V.col(1);
    EXPECT_NEAR(offdiag_objective(mats, V), offdiag_objective(mats, V2), 1e-12);
    EXPECT_THROW(offdiag_objective(mats, Eigen::MatrixXd::Identity(3, 3)), InputError);
}

TEST(JointDiagonalize, SingleDiagonalMatrix)
{
    const Eigen::MatrixXd D = Eigen::Vector4d(1.0, -3.0, 2.0, 0.5).asDiagonal();
    const std::vector<Eigen::MatrixXd> mats{D};
    const JointDiagResult r = joint_diagonalize(mats);
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(is_abs_permutation(r.rotation, 1e-12));
    EXPECT_NEAR(r.objective, 1.0 + 9.0 + 4.0 + 0.25, 1e-12);
    // Columns ordered by decreasing contribution: -3, 2, 1, 0.5.
    EXPECT_NEAR(std::abs(r.rotation(1, 0)), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(r.rotation(2, 1)), 1.0, 1e-12);
}

TEST(JointDiagonalize, RecoversConjugatedDiagonalFamily)
{
    std::mt19937_64 gen(6);
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::MatrixXd Q = random_orthogonal(gen, 6);
        std::vector<Eigen::MatrixXd> mats;
        for (int i = 0; i < 5; ++i) mats.push_back(Q * random_normal(gen, 6, 1).col(0).asDiagonal() * Q.transpose());
        const JointDiagResult r = joint_diagonalize(mats);
        EXPECT_TRUE(r.converged);
        EXPECT_TRUE(is_abs_permutation(r.rotation.transpose() * Q, 1e-6));
        EXPECT_NEAR(r.objective, hs_total(mats), 1e-8);
    }
}

TEST(JointDiagonalize, CommutingDiagonalFamilyGivesSignedPermutation)
{
    std::mt19937_64 gen(7);
    std::vector<Eigen::MatrixXd> mats;
    for (int i = 0; i < 4; ++i) mats.push_back(random_normal(gen, 5, 1).col(0).asDiagonal());
    const JointDiagResult r = joint_diagonalize(mats);
    EXPECT_TRUE(is_abs_permutation(r.rotation, 1e-6));
}

TEST(JointDiagonalize, MonotoneBoundedAndOrthogonalOnRandomFamilies)
{
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 25; ++trial) {
        const int d = 2 + trial % 6;
        const auto mats = random_symmetric_family(gen, 1 + trial % 5, d);
        const JointDiagResult r = joint_diagonalize(mats);
        for (std::size_t s = 1; s < r.history.size(); ++s)
            EXPECT_GE(r.history[s], r.history[s - 1] * (1.0 - 1e-12)) << "trial " << trial << " sweep " << s;
        EXPECT_LE(r.objective, hs_total(mats) + 1e-9);
        EXPECT_LT(max_abs(r.rotation.transpose() * r.rotation - Eigen::MatrixXd::Identity(d, d)), 1e-10);
        EXPECT_NEAR(r.objective, offdiag_objective(mats, r.rotation), 1e-9 * std::max(1.0, r.objective));
        for (Eigen::Index k = 0; k + 1 < d; ++k)
            EXPECT_GE(r.column_contribution(k), r.column_contribution(k + 1));
    }
}

TEST(JointDiagonalize, ReportsNonConvergence)
{
    std::mt19937_64 gen(9);
    const auto mats = random_symmetric_family(gen, 4, 6);
    const JointDiagResult r = joint_diagonalize(mats, {1e-8, 1});
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.sweeps, 1);
}

TEST(JointDiagonalize, RejectsBadInput)
{
    const std::vector<Eigen::MatrixXd> none;
    EXPECT_THROW(joint_diagonalize(none), InputError);
    const std::vector<Eigen::MatrixXd> scalar{Eigen::MatrixXd::Ones(1, 1)};
    EXPECT_THROW(joint_diagonalize(scalar), InputError);
    const std::vector<Eigen::MatrixXd> mixed{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(3, 3)};
    EXPECT_THROW(joint_diagonalize(mixed), InputError);
    Eigen::Matrix2d asym;
    asym << 1, 2, 0, 1;
    const std::vector<Eigen::MatrixXd> bad{asym};
    EXPECT_THROW(joint_diagonalize(bad), InputError);
}

TEST(GramEig, AgreesWithSymEigOfCrossProduct)
{
    std::mt19937_64 gen(21);
    const Eigen::MatrixXd A = random_normal(gen, 50, 6);
    const EigenDecomp g = gram_eig(A);
    const EigenDecomp s = sym_eig(A.transpose() * A);
    EXPECT_LT(max_abs(g.values - s.values), 1e-10);
    EXPECT_LT(max_abs(g.vectors - s.vectors), 1e-10);
}

TEST(GramEig, WideInputPadsZeroEigenvalues)
{
    std::mt19937_64 gen(22);
    const EigenDecomp g = gram_eig(random_normal(gen, 3, 5));
    ASSERT_EQ(g.values.size(), 5);
    EXPECT_GT(g.values(2), 0.0);
    EXPECT_EQ(g.values(3), 0.0);
    EXPECT_EQ(g.values(4), 0.0);
    EXPECT_LT(max_abs(g.vectors.transpose() * g.vectors - Eigen::MatrixXd::Identity(5, 5)), 1e-12);
}

TEST(GramEig, SmallEigenvaluesKeepRelativeAccuracy)
{
    // A = U diag(s) V^T with known singular values spanning 1e-6..1.
    std::mt19937_64 gen(23);
    const Eigen::MatrixXd U = random_orthogonal(gen, 40).leftCols(4);
    const Eigen::MatrixXd V = random_orthogonal(gen, 4);
    const Eigen::Vector4d s(1.0, 1e-2, 1e-4, 1e-6);
    const EigenDecomp g = gram_eig(U * s.asDiagonal() * V.transpose());
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(g.values(k) / (s(k) * s(k)), 1.0, 1e-8) << k;
    EXPECT_TRUE(is_abs_permutation(g.vectors.transpose() * V, 1e-8));
}
