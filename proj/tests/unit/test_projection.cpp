#include <cmath>
#include <gtest/gtest.h>
#include <grouplp/oracle.hpp>
#include <grouplp/projection.hpp>
#include "../support.hpp"

using namespace grouplp;
using testing_support::Rng;

namespace {

// Magnitude of b's dual norm times 2: the prox is zero at or above this mu.
double zero_threshold(const Eigen::VectorXd& b, const PNorm& p) { return 2.0 * p_norm(b, dual_exponent(p)); }

double kkt_residual(const Eigen::VectorXd& b, const Eigen::VectorXd& x, double mu, const PNorm& p)
{
    const Eigen::VectorXd s = 2.0 * (b - x) / mu;
    return subgradient_residual(x, s, p);
}

Coefficients random_grouped(Rng& rng, int J, int max_size, double scale)
{
    std::vector<std::size_t> sizes;
    for (int j = 0; j < J; ++j) sizes.push_back(static_cast<std::size_t>(rng.integer(1, max_size)));
    GroupPartition part(sizes);
    return {scale * rng.normal_vector(static_cast<Eigen::Index>(part.dim())), part};
}

} // namespace

TEST(ProxGroupTest, BlockSoftThresholdExample)
{
    // b (1 - mu / (2 ||b||)) = (3, 4) * 0.75, confirmed by the grid oracle.
    const Eigen::Vector2d b(3, 4);
    const auto x = prox_group(b, 2.5, PNorm(2.0));
    const auto ref = oracle::prox_grid_oracle(b, 2.5, PNorm(2.0));
    EXPECT_LT((x - ref).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_NEAR(x[0], 2.25, 1e-15);
    EXPECT_NEAR(x[1], 3.0, 1e-15);
    EXPECT_LT(kkt_residual(b, x, 2.5, PNorm(2.0)), 1e-14);
}

TEST(ProxGroupTest, ZeroRuleExample)
{
    // 2 ||(1,1)||_3 = 2 * 2^(1/3) < 4
    EXPECT_LT(zero_threshold(Eigen::Vector2d(1, 1), PNorm(1.5)), 4.0);
    EXPECT_EQ(prox_group(Eigen::Vector2d(1, 1), 4.0, PNorm(1.5)), Eigen::Vector2d::Zero());
}

TEST(ProxGroupTest, PThreeMatchesGridOracle)
{
    const Eigen::Vector2d b(2, 1);
    const auto x = prox_group(b, 1.0, PNorm(3.0));
    EXPECT_LT(kkt_residual(b, x, 1.0, PNorm(3.0)), 1e-8);
    oracle::OracleBudget budget;
    const auto ref = oracle::prox_grid_oracle(b, 1.0, PNorm(3.0), budget);
    EXPECT_LT((x - ref).cwiseAbs().maxCoeff(), 2 * budget.grid_step);
    EXPECT_LT((x - ref).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(ProxGroupTest, ScalarGroupsSoftThresholdForEveryP)
{
    for (const auto& p : testing_support::prox_exponents()) {
        EXPECT_DOUBLE_EQ(prox_group(Eigen::VectorXd::Constant(1, 3.0), 2.0, p)[0], 2.0);
        EXPECT_DOUBLE_EQ(prox_group(Eigen::VectorXd::Constant(1, -3.0), 2.0, p)[0], -2.0);
        EXPECT_EQ(prox_group(Eigen::VectorXd::Constant(1, 0.9), 2.0, p)[0], 0.0);
    }
}

TEST(ProxGroupTest, SignsAndExactZerosPreserved)
{
    const Eigen::Vector4d b(1.5, -2.0, 0.0, 0.7);
    for (const auto& p : testing_support::prox_exponents()) {
        const auto x = prox_group(b, 0.5, p);
        EXPECT_EQ(x[2], 0.0) << p.to_string();
        for (int i = 0; i < 4; ++i) EXPECT_GE(x[i] * b[i], 0.0) << p.to_string();
    }
}

TEST(ProxGroupTest, RejectsNegativeMu)
{
    EXPECT_THROW(prox_group(Eigen::Vector2d(1, 1), -1.0, PNorm(2.0)), InvalidInput);
}

TEST(ProxPropertyTest, KktResidualAndZeroRule)
{
    Rng rng(101);
    const auto& ps = testing_support::prox_exponents();
    for (int t = 0; t < 500; ++t) {
        const auto& p = ps[static_cast<std::size_t>(t) % ps.size()];
        const Eigen::VectorXd b = rng.uniform(0.1, 10.0) * rng.normal_vector(rng.integer(1, 20));
        const double mu = rng.uniform(0.01, 1.2) * zero_threshold(b, p);
        const auto x = prox_group(b, mu, p);
        if (x.cwiseAbs().maxCoeff() == 0.0) {
            EXPECT_LE(zero_threshold(b, p), mu + 1e-10) << p.to_string();
        } else {
            EXPECT_GT(zero_threshold(b, p), mu) << p.to_string();
            EXPECT_LE(kkt_residual(b, x, mu, p), 1e-8) << "p=" << p.to_string() << " t=" << t;
        }
    }
}

TEST(ProxPropertyTest, ZeroRuleIsSharp)
{
    Rng rng(102);
    for (const auto& p : testing_support::prox_exponents()) {
        for (int t = 0; t < 20; ++t) {
            const Eigen::VectorXd b = rng.normal_vector(rng.integer(2, 10));
            const double mu0 = zero_threshold(b, p);
            EXPECT_EQ(prox_group(b, mu0 * (1 + 1e-12), p).cwiseAbs().maxCoeff(), 0.0) << p.to_string();
            EXPECT_GT(prox_group(b, mu0 * (1 - 1e-6), p).cwiseAbs().maxCoeff(), 0.0) << p.to_string();
        }
    }
}

TEST(ProxPropertyTest, NonExpansive)
{
    Rng rng(103);
    for (const auto& p : testing_support::prox_exponents()) {
        for (int t = 0; t < 60; ++t) {
            const auto n = rng.integer(1, 12);
            const Eigen::VectorXd b1 = 3 * rng.normal_vector(n);
            const Eigen::VectorXd b2 = b1 + rng.uniform(0.001, 2.0) * rng.normal_vector(n);
            const double mu = rng.uniform(0.1, 4.0);
            EXPECT_LE((prox_group(b1, mu, p) - prox_group(b2, mu, p)).norm(), (b1 - b2).norm() * (1 + 1e-9))
                << p.to_string();
        }
    }
}

TEST(ProxPropertyTest, MonotoneShrinkage)
{
    Rng rng(104);
    for (const auto& p : testing_support::prox_exponents()) {
        for (int t = 0; t < 40; ++t) {
            const Eigen::VectorXd b = 2 * rng.normal_vector(rng.integer(1, 15));
            double prev = p_norm(b, p);
            for (double mu = 0.05; mu < zero_threshold(b, p) * 1.1; mu *= 1.4) {
                const double cur = p_norm(prox_group(b, mu, p), p);
                EXPECT_LE(cur, prev * (1 + 1e-10) + 1e-14) << p.to_string();
                prev = cur;
            }
        }
    }
}

TEST(ProxPropertyTest, GeneralPathAgreesWithClosedFormAtTwo)
{
    Rng rng(105);
    for (int t = 0; t < 100; ++t) {
        const Eigen::VectorXd b = rng.normal_vector(rng.integer(2, 10));
        const double mu = rng.uniform(0.1, 0.8) * zero_threshold(b, PNorm(2.0));
        const auto closed = prox_group(b, mu, PNorm(2.0));
        EXPECT_LT((detail::prox_group_general(b, mu, PNorm(2.0)) - closed).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((prox_group(b, mu, PNorm(2.0 + 1e-9)) - closed).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((prox_group(b, mu, PNorm(2.0 - 1e-9)) - closed).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(ProxPropertyTest, ClosedFormsMatchGridOracle)
{
    Rng rng(106);
    oracle::OracleBudget budget;
    for (const auto& p : {PNorm(1.0), PNorm(2.0), PNorm::infinity()}) {
        for (int t = 0; t < 6; ++t) {
            const Eigen::VectorXd b = 2 * rng.normal_vector(rng.integer(1, 3));
            const double mu = rng.uniform(0.1, 0.9) * zero_threshold(b, p);
            const auto x = prox_group(b, mu, p);
            EXPECT_LT((x - oracle::prox_grid_oracle(b, mu, p, budget)).cwiseAbs().maxCoeff(), 2 * budget.grid_step)
                << p.to_string();
            EXPECT_LT(kkt_residual(b, x, mu, p), 1e-12) << p.to_string();
        }
    }
}

TEST(ProjectionTest, RadialScalingOfSingleL2Group)
{
    const Coefficients b(Eigen::Vector2d(3, 4), GroupPartition({2}));
    const auto rep = project_l1p_ball(b, PNorm(2.0), 2.5);
    EXPECT_TRUE(rep.constraint_active);
    EXPECT_NEAR(rep.beta.values[0], 1.5, 1e-8);
    EXPECT_NEAR(rep.beta.values[1], 2.0, 1e-8);
}

TEST(ProjectionTest, InteriorPointIsIdentity)
{
    const Coefficients b(Eigen::Vector3d(0.25, -0.5, 0.25), GroupPartition({1, 2}));
    for (const auto& p : testing_support::prox_exponents()) {
        const Coefficients scaled(b.values / mixed_norm(b, p), b.partition);
        const auto rep = project_l1p_ball(scaled, p, 2.0);
        EXPECT_FALSE(rep.constraint_active);
        EXPECT_EQ(rep.mu, 0.0);
        EXPECT_EQ(rep.beta.values, scaled.values);
        // The sphere itself counts as interior.
        const auto tie = project_l1p_ball(scaled, p, mixed_norm(scaled, p));
        EXPECT_FALSE(tie.constraint_active);
        EXPECT_EQ(tie.beta.values, scaled.values);
    }
}

TEST(ProjectionTest, TwoGroupInfinityMatchesBudgetGrid)
{
    const Coefficients b((Eigen::VectorXd(4) << 2, 0, 0, 1).finished(), GroupPartition({2, 2}));
    const auto rep = project_l1p_ball(b, PNorm::infinity(), 1.5);

    // Grid over the two group budgets t1 + t2 <= 1.5; each group is clipped at its budget.
    double best = 1e300;
    Eigen::VectorXd ref;
    for (int i = 0; i <= 1500; ++i) {
        for (int k = 0; i + k <= 1500; ++k) {
            const double t1 = 1e-3 * i, t2 = 1e-3 * k;
            Eigen::VectorXd x(4);
            x << std::clamp(2.0, -t1, t1), 0, 0, std::clamp(1.0, -t2, t2);
            const double v = (b.values - x).squaredNorm();
            if (v < best) {
                best = v;
                ref = x;
            }
        }
    }
    EXPECT_LT((rep.beta.values - ref).cwiseAbs().maxCoeff(), 2e-3);
    EXPECT_NEAR(rep.beta.values[0], 1.25, 1e-8);
    EXPECT_NEAR(rep.beta.values[3], 0.25, 1e-8);
}

TEST(ProjectionTest, ThreeGroupPOnePointFiveHitsRadius)
{
    Rng rng(107);
    const Coefficients b(rng.normal_vector(7), GroupPartition({2, 3, 2}));
    const auto rep = project_l1p_ball(b, PNorm(1.5), 0.5 * mixed_norm(b, PNorm(1.5)));
    EXPECT_TRUE(rep.constraint_active);
    EXPECT_NEAR(mixed_norm(rep.beta, PNorm(1.5)), 0.5 * mixed_norm(b, PNorm(1.5)), 1e-8);
}

TEST(ProjectionTest, RejectsNonPositiveKappa)
{
    const Coefficients b(Eigen::Vector2d(3, 4), GroupPartition({2}));
    EXPECT_THROW(project_l1p_ball(b, PNorm(2.0), 0.0), InvalidInput);
}

TEST(ProjectionTest, BudgetExhaustionCarriesLastIterate)
{
    Rng rng(108);
    const Coefficients b(rng.normal_vector(6), GroupPartition({3, 3}));
    ProxTolerances tol;
    tol.max_outer_bisections = 2;
    tol.outer_kappa_tol = 1e-14;
    try {
        project_l1p_ball(b, PNorm(2.0), 0.1, tol);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.last_iterate().size(), 6);
    }
}

TEST(ProjectionPropertyTest, FeasibleIdempotentAndLogarithmic)
{
    Rng rng(109);
    const auto& ps = testing_support::prox_exponents();
    for (int t = 0; t < 200; ++t) {
        const auto& p = ps[static_cast<std::size_t>(t) % ps.size()];
        const auto b = random_grouped(rng, rng.integer(1, 8), 6, rng.uniform(0.1, 10));
        const double kappa = rng.uniform(0.05, 0.95) * mixed_norm(b, p);
        ProxTolerances tol;
        const auto rep = project_l1p_ball(b, p, kappa, tol);
        ASSERT_TRUE(rep.constraint_active);
        EXPECT_LE(std::abs(mixed_norm(rep.beta, p) - kappa), tol.outer_kappa_tol) << p.to_string();
        EXPECT_LE(rep.outer_iterations, 80) << p.to_string();
        const auto again = project_l1p_ball(rep.beta, p, kappa, tol);
        EXPECT_LT((again.beta.values - rep.beta.values).cwiseAbs().maxCoeff(), 1e-8) << p.to_string();
    }
}

TEST(ProjectionPropertyTest, IllinoisSearchAgreesWithBisection)
{
    Rng rng(110);
    const auto& ps = testing_support::prox_exponents();
    for (int t = 0; t < 140; ++t) {
        const auto& p = ps[static_cast<std::size_t>(t) % ps.size()];
        const auto b = random_grouped(rng, rng.integer(1, 10), 5, 3.0);
        const double kappa = rng.uniform(0.05, 0.95) * mixed_norm(b, p);
        ProxTolerances bis{1e-12, 1e-12, 200, 200, MultiplierSearch::bisection};
        ProxTolerances ill = bis;
        ill.search = MultiplierSearch::illinois;
        const auto a = project_l1p_ball(b, p, kappa, bis);
        const auto c = project_l1p_ball(b, p, kappa, ill);
        EXPECT_LT((a.beta.values - c.beta.values).cwiseAbs().maxCoeff(), 1e-9) << p.to_string();
        EXPECT_LE(c.outer_iterations, a.outer_iterations + 5);
    }
}

TEST(ProjectionPropertyTest, ExcessIsNonIncreasingInMu)
{
    Rng rng(111);
    const auto& ps = testing_support::prox_exponents();
    for (int t = 0; t < 70; ++t) {
        const auto& p = ps[static_cast<std::size_t>(t) % ps.size()];
        const auto b = random_grouped(rng, rng.integer(1, 6), 5, 2.0);
        const double kappa = 0.5 * mixed_norm(b, p);
        double mu_max = 0.0;
        for (std::size_t j = 0; j < b.partition.group_count(); ++j)
            mu_max = std::max(mu_max, zero_threshold(Eigen::VectorXd(b.group(j)), p));
        double prev = projection_excess(b, 0.0, p, kappa);
        for (int k = 1; k <= 50; ++k) {
            const double g = projection_excess(b, mu_max * k / 50.0, p, kappa);
            EXPECT_LE(g, prev + 1e-12) << p.to_string();
            prev = g;
        }
        EXPECT_NEAR(prev, -kappa, 1e-12 * kappa);
    }
}

TEST(ProjectionPropertyTest, IsTheEuclideanProjection)
{
    // Variational inequality: <b - P(b), z - P(b)> <= 0 for feasible z.
    Rng rng(112);
    const auto& ps = testing_support::prox_exponents();
    for (int t = 0; t < 70; ++t) {
        const auto& p = ps[static_cast<std::size_t>(t) % ps.size()];
        const auto b = random_grouped(rng, rng.integer(1, 5), 4, 2.0);
        const double kappa = 0.4 * mixed_norm(b, p);
        const auto proj = project_l1p_ball(b, p, kappa, {1e-12, 1e-12, 200, 200}).beta.values;
        for (int s = 0; s < 20; ++s) {
            Coefficients z(rng.normal_vector(b.values.size()), b.partition);
            z.values *= rng.uniform(0.0, 1.0) * kappa / mixed_norm(z, p);
            EXPECT_LE((b.values - proj).dot(z.values - proj), 1e-9) << p.to_string();
        }
    }
}
