#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>

#include "martquant/mot.hpp"

using namespace martquant;

namespace {

DiscreteDistribution d1(std::vector<double> x, std::vector<double> w) { return DiscreteDistribution::from_1d(x, w); }

DiscreteDistribution random_law(CounterRng& rng, std::size_t n) {
    std::vector<double> x(n), w(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = -1.0 + 2.0 * (static_cast<double>(i) + 0.2 + 0.6 * rng.uniform()) / static_cast<double>(n);
        s += (w[i] = 0.2 + rng.uniform());
    }
    for (auto& v : w) v /= s;
    w.back() = 1.0 - std::accumulate(w.begin(), w.end() - 1, 0.0);
    return d1(x, w);
}

DiscreteDistribution spread(const DiscreteDistribution& mu, CounterRng& rng) {
    std::map<double, double> acc;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double x = mu.point(i)[0];
        const double a = 0.1 + rng.uniform(), b = 0.1 + rng.uniform();
        acc[x - a] += mu.weight(i) * b / (a + b);
        acc[x + b] += mu.weight(i) * a / (a + b);
    }
    std::vector<double> xs, ws;
    for (auto [x, w] : acc) {
        xs.push_back(x);
        ws.push_back(w);
    }
    return DiscreteDistribution::from_1d(xs, ws, 1e-12);
}

// Coupling checks straight from the sparse representation.
void expect_martingale_coupling(const SparseCoupling& c, const DiscreteDistribution& a, const DiscreteDistribution& b) {
    std::vector<double> row(a.size(), 0.0), col(b.size(), 0.0), bar(a.size(), 0.0);
    for (std::size_t k = 0; k < c.mass.size(); ++k) {
        const auto i = c.index[k][0], j = c.index[k][1];
        row[i] += c.mass[k];
        col[j] += c.mass[k];
        bar[i] += c.mass[k] * (b.point(j)[0] - a.point(i)[0]);
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(row[i], a.weight(i), 1e-8);
        EXPECT_NEAR(bar[i], 0.0, 1e-8);
    }
    for (std::size_t j = 0; j < b.size(); ++j) EXPECT_NEAR(col[j], b.weight(j), 1e-8);
}

}  // namespace

TEST(Mot, PointMassSourceGivesVariance) {
    auto mu1 = d1({-1.0, 0.5, 2.0}, {0.3, 0.5, 0.2});
    const double m = mu1.mean()[0];
    auto r = mot_bounds(make_mot_problem(d1({m}, {1.0}), mu1, payoffs::quadratic()));
    const double var = mu1.second_moment() - m * m;
    EXPECT_NEAR(r.lower, var, 1e-12);
    EXPECT_NEAR(r.upper, var, 1e-12);
}

TEST(Mot, QuadraticIdentityOnRandomPairs) {
    CounterRng rng(21, 0);
    for (int t = 0; t < 8; ++t) {
        auto a = random_law(rng, 3 + t);
        auto b = spread(a, rng);
        auto r = mot_bounds(make_mot_problem(a, b, payoffs::quadratic()));
        const double closed = b.second_moment() - a.second_moment();
        EXPECT_NEAR(r.lower, closed, 1e-8);
        EXPECT_LT(r.upper - r.lower, 1e-8);
        EXPECT_LT(r.marginal_residual, 1e-8);
        EXPECT_LT(r.martingale_residual, 1e-8);
        expect_martingale_coupling(r.lower_coupling, a, b);
        expect_martingale_coupling(r.upper_coupling, a, b);
    }
}

TEST(Mot, EqualTwoPointMarginalsForceIdentity) {
    auto mu = d1({-1, 1}, {0.5, 0.5});
    MotProblem pb;
    pb.marginals = {mu, mu};
    pb.table = {0.7, -3.0, 5.0, 0.2};
    auto r = mot_bounds(pb);
    EXPECT_NEAR(r.lower, 0.5 * 0.7 + 0.5 * 0.2, 1e-12);
    EXPECT_NEAR(r.upper, r.lower, 1e-12);
    ASSERT_EQ(r.lower_coupling.mass.size(), 2u);
    for (const auto& idx : r.lower_coupling.index) EXPECT_EQ(idx[0], idx[1]);
}

TEST(Mot, UpperIsMinusLowerOfNegatedPayoff) {
    CounterRng rng(2, 0);
    auto a = random_law(rng, 5);
    auto b = spread(a, rng);
    for (auto c : {payoffs::spread(), payoffs::forward_start(0.1)}) {
        auto r = mot_bounds(make_mot_problem(a, b, c));
        auto s = mot_bounds(make_mot_problem(a, b, payoffs::negated(c)));
        EXPECT_NEAR(r.upper, -s.lower, 1e-8);
        EXPECT_NEAR(r.lower, -s.upper, 1e-8);
        EXPECT_LE(r.lower, r.upper + 1e-8);
    }
}

TEST(Mot, SpreadBoundsBracketAKnownCoupling) {
    // Any explicit martingale coupling prices inside [lower, upper].
    auto a = d1({0}, {1});
    auto b = d1({-1, 2}, {2.0 / 3, 1.0 / 3});
    auto r = mot_bounds(make_mot_problem(a, b, payoffs::spread()));
    EXPECT_NEAR(r.lower, 2.0 / 3 + 2.0 / 3, 1e-12);
    EXPECT_NEAR(r.upper, r.lower, 1e-12);
}

TEST(Mot, RejectsOutOfOrderMarginals) {
    auto a = d1({-1, 1}, {0.5, 0.5});
    auto b = d1({0}, {1});
    try {
        mot_bounds(make_mot_problem(a, b, payoffs::quadratic()));
        FAIL() << "expected NotInConvexOrder";
    } catch (const NotInConvexOrder& e) {
        ASSERT_TRUE(e.witness().has_value());
        EXPECT_GT(a.expectation(*e.witness()), b.expectation(*e.witness()));
    }
    MotOptions skip;
    skip.check_order = false;
    EXPECT_THROW(mot_bounds(make_mot_problem(a, b, payoffs::quadratic()), skip), NotInConvexOrder);
}

TEST(Mot, BudgetGuard) {
    auto pb = make_mot_problem(d1({0, 1}, {0.5, 0.5}), d1({-1, 0, 2}, {0.25, 0.5, 0.25}), payoffs::quadratic());
    pb.budget = 5;
    EXPECT_THROW(mot_bounds(pb), BudgetExceeded);
    EXPECT_THROW(build_mot_lp(pb, Sense::Minimize), BudgetExceeded);
}

TEST(Mot, ThreeMarginals) {
    CounterRng rng(7, 0);
    auto a = random_law(rng, 2);
    auto b = spread(a, rng);
    auto c = spread(b, rng);
    MotProblem pb;
    pb.marginals = {a, b, c};
    pb.payoff = payoffs::quadratic();
    auto r = mot_bounds(pb);
    EXPECT_NEAR(r.lower, c.second_moment() - a.second_moment(), 1e-9);
    EXPECT_NEAR(r.upper, r.lower, 1e-9);
    EXPECT_LT(r.martingale_residual, 1e-8);
    // Prefix martingale condition: for each (i0, i1) the mean of x2 equals x1.
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> acc;
    for (std::size_t k = 0; k < r.upper_coupling.mass.size(); ++k) {
        const auto& idx = r.upper_coupling.index[k];
        auto& [mass, bar] = acc[{idx[0], idx[1]}];
        mass += r.upper_coupling.mass[k];
        bar += r.upper_coupling.mass[k] * (c.point(idx[2])[0] - b.point(idx[1])[0]);
    }
    for (auto& [key, v] : acc) EXPECT_NEAR(v.second, 0.0, 1e-9);
    auto fs = mot_bounds({{a, b, c}, payoffs::forward_start(0.0), {}, 1000000});
    EXPECT_LE(fs.lower, fs.upper + 1e-9);
}

TEST(Mot, TwoDimensionalMarginals) {
    DiscreteDistribution mu({{0.0, 0.0}}, {1.0});
    DiscreteDistribution nu({{1.0, 0.0}, {-0.5, 0.8}, {-0.5, -0.8}}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    MotProblem pb;
    pb.marginals = {mu, nu};
    pb.payoff = payoffs::quadratic();
    auto r = mot_bounds(pb);
    EXPECT_NEAR(r.lower, nu.second_moment(), 1e-12);
}

TEST(Mot, ThreadedMatchesSerial) {
    CounterRng rng(12, 0);
    auto a = random_law(rng, 6);
    auto b = spread(a, rng);
    MotOptions t;
    t.threads = 2;
    auto s1 = mot_bounds(make_mot_problem(a, b, payoffs::spread()));
    auto s2 = mot_bounds(make_mot_problem(a, b, payoffs::spread()), t);
    EXPECT_EQ(s1.lower, s2.lower);
    EXPECT_EQ(s1.upper, s2.upper);
}

TEST(Mot, ExportWritesBothFiles) {
    auto dir = std::filesystem::temp_directory_path() / "martquant_mot_export";
    std::filesystem::create_directories(dir);
    auto pb = make_mot_problem(d1({0}, {1}), d1({-1, 1}, {0.5, 0.5}), payoffs::spread());
    export_mot_lp(pb, (dir / "inst").string());
    EXPECT_TRUE(std::filesystem::exists(dir / "inst_lower.lp"));
    EXPECT_TRUE(std::filesystem::exists(dir / "inst_upper.lp"));
    std::filesystem::remove_all(dir);
}

TEST(Stability, UniformQuadraticRows) {
    auto rows = stability_experiment(AnalyticLaw1D::uniform(-1, 1), AnalyticLaw1D::uniform(-2, 2), payoffs::quadratic(),
                                     {{4, 4}, {8, 8}, {16, 16}, {32, 32}});
    ASSERT_EQ(rows.size(), 4u);
    double prev = 1e9;
    for (const auto& r : rows) {
        ASSERT_TRUE(r.closed_form.has_value());
        EXPECT_NEAR(r.lower, *r.closed_form, 1e-8);
        EXPECT_NEAR(r.upper, *r.closed_form, 1e-8);
        const double err = std::abs(*r.closed_form - 1.0);
        // Primal variance deficit 1/(3N^2), dual excess 16/(6(M-1)^2): N^2 err stays bounded.
        EXPECT_LT(err * r.n * r.n, 6.0);
        EXPECT_LT(err, prev);
        prev = err;
    }
    // Exact value: 4/3 + 16/(6(M-1)^2) - (1/3 - 1/(3N^2)).
    for (const auto& r : rows) {
        const double n = r.n, m = r.m;
        EXPECT_NEAR(*r.closed_form, 4.0 / 3 + 16.0 / (6 * (m - 1) * (m - 1)) - (1.0 / 3 - 1.0 / (3 * n * n)), 1e-9);
    }
}

TEST(Stability, PowerDensitySpreadIsCauchy) {
    auto base = AnalyticLaw1D::power_density_2x().affine(-2.0 / 3.0, 1.0);
    auto wide = AnalyticLaw1D::power_density_2x().affine(-4.0 / 3.0, 2.0);
    auto rows = stability_experiment(base, wide, payoffs::spread(), {{8, 8}, {16, 16}, {32, 32}, {64, 64}});
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) EXPECT_LE(r.lower, r.upper + 1e-9);
    const double dl1 = std::abs(rows[1].lower - rows[0].lower), dl2 = std::abs(rows[2].lower - rows[1].lower),
                 dl3 = std::abs(rows[3].lower - rows[2].lower);
    const double du1 = std::abs(rows[1].upper - rows[0].upper), du2 = std::abs(rows[2].upper - rows[1].upper),
                 du3 = std::abs(rows[3].upper - rows[2].upper);
    EXPECT_GT(dl1, dl2);
    EXPECT_GT(dl2, dl3);
    EXPECT_GT(du1, du2);
    EXPECT_GT(du2, du3);
}

TEST(W2Bound, UniformClosedForm) {
    auto u = AnalyticLaw1D::uniform(0, 1);
    for (auto [n, m] : {std::pair<std::size_t, std::size_t>{4, 5}, {8, 3}, {16, 17}}) {
        const double expect = std::sqrt(1.0 / (12.0 * n * n) + 1.0 / (6.0 * (m - 1.0) * (m - 1.0)));
        EXPECT_NEAR(w2_coupling_bound(u, u, n, m), expect, 1e-9);
    }
    // Large N leaves the dual term.
    EXPECT_NEAR(w2_coupling_bound(u, u, 400, 5), std::sqrt(1.0 / 96.0), 2e-4);
    EXPECT_EQ(w2_coupling_bound(AnalyticLaw1D::point_mass(0.3), AnalyticLaw1D::point_mass(0.3), 3, 4), 0.0);
}
