#include <gtest/gtest.h>

#include <sstream>

#include "martquant/lp.hpp"
#include "martquant/rng.hpp"

using namespace martquant;

namespace {

double dual_objective(const LinearProgram& lp, const LpSolution& s) {
    double v = 0.0;
    for (std::size_t i = 0; i < lp.rows(); ++i) v += lp.rhs(i) * s.duals[i];
    return v;
}

// Random feasible transportation problem with rows for supplies and demands.
LinearProgram random_transport(std::size_t a, std::size_t b, std::uint64_t seed) {
    CounterRng rng(seed, 0);
    LinearProgram lp(a + b, a * b);
    std::vector<double> s(a), d(b);
    double ts = 0, td = 0;
    for (auto& v : s) ts += (v = 0.1 + rng.uniform());
    for (auto& v : d) td += (v = 0.1 + rng.uniform());
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j) {
            const std::size_t k = i * b + j;
            lp.objective(k) = rng.uniform();
            lp.coeff(i, k) = 1.0;
            lp.coeff(a + j, k) = 1.0;
        }
    for (std::size_t i = 0; i < a; ++i) lp.rhs(i) = s[i] / ts;
    for (std::size_t j = 0; j < b; ++j) lp.rhs(a + j) = d[j] / td;
    return lp;
}

}  // namespace

TEST(Lp, SingleEquality) {
    LinearProgram lp(1, 1);
    lp.objective(0) = 1.0;
    lp.coeff(0, 0) = 1.0;
    lp.rhs(0) = 3.0;
    auto s = solve(lp);
    ASSERT_EQ(s.status, LpStatus::Optimal);
    EXPECT_DOUBLE_EQ(s.x[0], 3.0);
    EXPECT_DOUBLE_EQ(s.objective, 3.0);
    EXPECT_NEAR(dual_objective(lp, s), 3.0, 1e-12);
}

TEST(Lp, InfeasibleWithCertificate) {
    LinearProgram lp(2, 2);
    lp.coeff(0, 0) = 1;
    lp.coeff(0, 1) = 1;
    lp.rhs(0) = 1;
    lp.coeff(1, 0) = 1;
    lp.coeff(1, 1) = -1;
    lp.rhs(1) = 3;
    auto s = solve(lp);
    ASSERT_EQ(s.status, LpStatus::Infeasible);
    ASSERT_EQ(s.farkas.size(), 2u);
    // y'A <= 0 componentwise and y'b > 0.
    for (std::size_t j = 0; j < 2; ++j) {
        double v = 0;
        for (std::size_t i = 0; i < 2; ++i) v += s.farkas[i] * lp.coeff(i, j);
        EXPECT_LE(v, 1e-12);
    }
    EXPECT_GT(s.farkas[0] * 1 + s.farkas[1] * 3, 1e-9);
}

TEST(Lp, TwoByTwoTransportPicksDiagonal) {
    // Both basic plans: diagonal (cost 0) and anti-diagonal (cost 1).
    LinearProgram lp = [] {
        LinearProgram p(4, 4);
        const double cost[4] = {0, 1, 1, 0};
        for (int k = 0; k < 4; ++k) {
            p.objective(k) = cost[k];
            p.coeff(k / 2, k) = 1;
            p.coeff(2 + k % 2, k) = 1;
        }
        for (int i = 0; i < 4; ++i) p.rhs(i) = 0.5;
        return p;
    }();
    auto s = solve(lp);
    ASSERT_EQ(s.status, LpStatus::Optimal);
    EXPECT_NEAR(s.objective, 0.0, 1e-14);
    EXPECT_NEAR(s.x[0], 0.5, 1e-14);
    EXPECT_NEAR(s.x[3], 0.5, 1e-14);
    EXPECT_NEAR(s.x[1], 0.0, 1e-14);
    EXPECT_NEAR(s.x[2], 0.0, 1e-14);
    EXPECT_LT(s.primal_residual, 1e-8);
    EXPECT_LT(s.complementary_slackness, 1e-7);
}

TEST(Lp, Unbounded) {
    LinearProgram lp(1, 2);
    lp.objective(0) = -1.0;
    lp.coeff(0, 0) = 1;
    lp.coeff(0, 1) = -1;
    lp.rhs(0) = 1;
    EXPECT_EQ(solve(lp).status, LpStatus::Unbounded);
}

TEST(Lp, MaximizeNegatesMinimize) {
    auto lp = random_transport(4, 5, 3);
    auto lo = solve(lp);
    for (std::size_t j = 0; j < lp.cols(); ++j) lp.objective(j) = -lp.objective(j);
    lp.set_sense(Sense::Maximize);
    auto hi = solve(lp);
    ASSERT_EQ(lo.status, LpStatus::Optimal);
    ASSERT_EQ(hi.status, LpStatus::Optimal);
    EXPECT_NEAR(hi.objective, -lo.objective, 1e-12);
    EXPECT_NEAR(dual_objective(lp, hi), hi.objective, 1e-9);
}

TEST(Lp, NegativeRhsRowsAreHandled) {
    LinearProgram lp(1, 2);
    lp.objective(0) = 2;
    lp.objective(1) = 1;
    lp.coeff(0, 0) = -1;
    lp.coeff(0, 1) = -1;
    lp.rhs(0) = -4;
    auto s = solve(lp);
    ASSERT_EQ(s.status, LpStatus::Optimal);
    EXPECT_NEAR(s.objective, 4.0, 1e-14);
    EXPECT_NEAR(s.duals[0], -1.0, 1e-14);
}

TEST(Lp, RedundantRowsKeepDualsConsistent) {
    // Transport rows are rank deficient by one.
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto lp = random_transport(3 + seed % 4, 2 + seed % 5, seed);
        auto s = solve(lp);
        ASSERT_EQ(s.status, LpStatus::Optimal);
        EXPECT_LT(s.primal_residual, 1e-8);
        EXPECT_LT(s.complementary_slackness, 1e-7);
        // Weak duality and, at an optimal basis, strong duality.
        const double dobj = dual_objective(lp, s);
        EXPECT_LE(dobj, s.objective + 1e-7);
        EXPECT_NEAR(dobj, s.objective, 1e-9);
        // Dual feasibility: reduced costs nonnegative.
        for (std::size_t j = 0; j < lp.cols(); ++j) {
            double red = lp.objective(j);
            for (std::size_t i = 0; i < lp.rows(); ++i) red -= s.duals[i] * lp.coeff(i, j);
            EXPECT_GE(red, -1e-9);
        }
    }
}

TEST(Lp, BruteForceAgreesOnSmallTransport) {
    // 2x3 transport: enumerate vertices by fixing x00 over a fine lattice.
    auto lp = random_transport(2, 3, 11);
    auto s = solve(lp);
    ASSERT_EQ(s.status, LpStatus::Optimal);
    const double s0 = lp.rhs(0);
    const double d0 = lp.rhs(2), d1 = lp.rhs(3), d2 = lp.rhs(4);
    double best = 1e300;
    const int K = 400;
    for (int a = 0; a <= K; ++a)
        for (int b = 0; b <= K; ++b) {
            const double x00 = d0 * a / K, x01 = d1 * b / K, x02 = s0 - x00 - x01;
            if (x02 < -1e-15 || x02 > d2 + 1e-15) continue;
            const double x[6] = {x00, x01, x02, d0 - x00, d1 - x01, d2 - x02};
            double c = 0;
            for (int k = 0; k < 6; ++k) c += lp.objective(k) * x[k];
            best = std::min(best, c);
        }
    EXPECT_LE(s.objective, best + 1e-12);
    EXPECT_GT(s.objective, best - 5e-3);
}

TEST(Lp, Deterministic) {
    auto lp = random_transport(8, 9, 5);
    auto a = solve(lp);
    auto b = solve(lp);
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.duals, b.duals);
    EXPECT_EQ(a.objective, b.objective);
}

TEST(Lp, IterLimit) {
    auto lp = random_transport(6, 6, 2);
    LpOptions opt;
    opt.max_iter = 1;
    EXPECT_EQ(solve(lp, opt).status, LpStatus::IterLimit);
}

TEST(Lp, PivotRulesAgree) {
    auto lp = random_transport(7, 6, 9);
    LpOptions bland;
    bland.rule = PivotRule::Bland;
    auto ref = solve(lp, bland);
    ASSERT_EQ(ref.status, LpStatus::Optimal);
    for (auto rule : {PivotRule::Dantzig, PivotRule::Hybrid}) {
        LpOptions opt;
        opt.rule = rule;
        opt.degenerate_run = 2;
        auto b = solve(lp, opt);
        ASSERT_EQ(b.status, LpStatus::Optimal);
        EXPECT_NEAR(ref.objective, b.objective, 1e-12);
    }
}

TEST(Lp, RejectsNonFinite) {
    LinearProgram lp(1, 1);
    lp.coeff(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(solve(lp), DomainError);
}

TEST(LpFile, ExactText) {
    LinearProgram lp(2, 3);
    lp.objective(0) = 0.1;
    lp.objective(2) = -2;
    lp.coeff(0, 0) = 1;
    lp.coeff(0, 1) = 1;
    lp.coeff(1, 1) = -1;
    lp.coeff(1, 2) = 0.5;
    lp.rhs(0) = 1;
    lp.rhs(1) = -0.25;
    std::ostringstream os;
    write_lp_file(lp, os);
    EXPECT_EQ(os.str(),
              "Minimize\n"
              " obj: 0.10000000000000001 x0 - 2 x2\n"
              "ST\n"
              " c0: 1 x0 + 1 x1 = 1\n"
              " c1: - 1 x1 + 0.5 x2 = -0.25\n"
              "BOUNDS\n"
              " x0 >= 0\n x1 >= 0\n x2 >= 0\n"
              "END\n");
}
