#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "martquant/laws.hpp"
#include "martquant/quadrature.hpp"

using namespace martquant;

namespace {

std::vector<AnalyticLaw1D> continuous_laws() {
    return {AnalyticLaw1D::uniform(0, 1), AnalyticLaw1D::uniform(-1, 2), AnalyticLaw1D::normal(0, 1),
            AnalyticLaw1D::normal(0.7, 2.5), AnalyticLaw1D::exponential(1.5),
            AnalyticLaw1D::power_density_2x(), AnalyticLaw1D::power_density_2x().affine(-2.0 / 3.0, 2.0)};
}

std::vector<AnalyticLaw1D> all_laws() {
    auto v = continuous_laws();
    v.push_back(AnalyticLaw1D::point_mass(2.0));
    v.push_back(AnalyticLaw1D::finite_atoms({1.0, -1.0, 0.5}, {0.25, 0.5, 0.25}));
    return v;
}

// Independent oracle: integrate z^k f(z) from the lower end of the support.
double oracle_partial(const AnalyticLaw1D& law, double z, int k) {
    const Interval s = law.support();
    const double lo = std::isfinite(s.lo) ? s.lo : -std::numeric_limits<double>::infinity();
    const double hi = std::min(z, s.hi);
    if (!(hi > lo)) return 0.0;
    return integrate([&](double t) { return std::pow(t, k) * law.density(t); }, lo, hi);
}

}  // namespace

TEST(Cdf, Examples) {
    EXPECT_DOUBLE_EQ(AnalyticLaw1D::uniform(0, 1).cdf(0.5), 0.5);
    EXPECT_DOUBLE_EQ(AnalyticLaw1D::power_density_2x().cdf(0.5), 0.25);
    EXPECT_DOUBLE_EQ(AnalyticLaw1D::normal(0, 1).cdf(0.0), 0.5);
}

TEST(PartialMoment, Examples) {
    EXPECT_DOUBLE_EQ(AnalyticLaw1D::uniform(0, 1).partial_moment(1.0), 0.5);
    EXPECT_DOUBLE_EQ(AnalyticLaw1D::uniform(0, 1).partial_moment(0.5), 0.125);
    EXPECT_NEAR(AnalyticLaw1D::normal(0, 1).partial_moment(0.0), -1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
}

TEST(PartialMoment, MatchesQuadratureOracle) {
    for (const auto& law : continuous_laws()) {
        for (double z : {-3.0, -0.7, 0.0, 0.2, 0.5, 0.9, 1.3, 4.0}) {
            EXPECT_NEAR(law.cdf(z), oracle_partial(law, z, 0), 1e-12) << law.name() << " z=" << z;
            EXPECT_NEAR(law.partial_moment(z), oracle_partial(law, z, 1), 1e-11) << law.name() << " z=" << z;
            EXPECT_NEAR(law.partial_second_moment(z), oracle_partial(law, z, 2), 1e-11) << law.name();
        }
    }
}

TEST(PartialMoment, NormalWithScaleUsesVariance) {
    // K(z) = m F(z) - s^2 phi_{m,s}(z)
    const double m = 0.7, s = 2.5, z = 1.1;
    const auto law = AnalyticLaw1D::normal(m, s);
    const double phi = std::exp(-0.5 * std::pow((z - m) / s, 2)) / (s * std::sqrt(2.0 * std::numbers::pi));
    EXPECT_NEAR(law.partial_moment(z), m * law.cdf(z) - s * s * phi, 1e-14);
}

TEST(PartialMoment, TendsToMean) {
    for (const auto& law : all_laws()) {
        EXPECT_NEAR(law.partial_moment(1e6), law.mean(), 1e-12) << law.name();
        EXPECT_NEAR(law.partial_second_moment(1e6), law.second_moment(), 1e-12) << law.name();
        EXPECT_NEAR(law.cdf(1e6), 1.0, 1e-15);
        EXPECT_NEAR(law.cdf(-1e6), 0.0, 1e-15);
    }
}

TEST(Laws, MonotoneAndMeanValueBracketing) {
    for (const auto& law : all_laws()) {
        for (int i = 0; i < 60; ++i) {
            const double z1 = -3.0 + 0.1 * i;
            const double z2 = z1 + 0.137;
            const double dF = law.cdf(z2) - law.cdf(z1);
            const double dK = law.partial_moment(z2) - law.partial_moment(z1);
            EXPECT_GE(dF, 0.0);
            EXPECT_GE(dK, z1 * dF - 1e-14) << law.name();
            EXPECT_LE(dK, z2 * dF + 1e-14) << law.name();
            EXPECT_LE(law.cdf_left(z1), law.cdf(z1));
        }
    }
}

TEST(Quantile, Examples) {
    EXPECT_DOUBLE_EQ(AnalyticLaw1D::uniform(0, 1).quantile(0.3), 0.3);
    EXPECT_DOUBLE_EQ(AnalyticLaw1D::power_density_2x().quantile(0.25), 0.5);
    EXPECT_DOUBLE_EQ(AnalyticLaw1D::finite_atoms({0, 1}, {0.5, 0.5}).quantile(0.5), 0.0);
    EXPECT_THROW(AnalyticLaw1D::uniform(0, 1).quantile(0.0), DomainError);
    EXPECT_THROW(AnalyticLaw1D::uniform(0, 1).quantile(1.0), DomainError);
}

TEST(Quantile, InvertsCdfOnContinuityPoints) {
    for (const auto& law : continuous_laws()) {
        for (int i = 1; i <= 100; ++i) {
            const double u = (i - 0.5) / 100.0;
            const double z = law.quantile(u);
            EXPECT_NEAR(law.cdf(z), u, 1e-12) << law.name();
        }
    }
}

TEST(FiniteAtoms, StepFunctionAndLeftLimit) {
    const auto law = AnalyticLaw1D::finite_atoms({0.0, 1.0, 1.0}, {0.5, 0.25, 0.25});
    EXPECT_DOUBLE_EQ(law.cdf(0.0), 0.5);
    EXPECT_DOUBLE_EQ(law.cdf_left(0.0), 0.0);
    EXPECT_DOUBLE_EQ(law.cdf_left(1.0), 0.5);
    EXPECT_DOUBLE_EQ(law.cdf(1.0), 1.0);
    EXPECT_DOUBLE_EQ(law.partial_moment(1.0), 0.5);
    EXPECT_EQ(law.atoms().size(), 2u);
    EXPECT_THROW(AnalyticLaw1D::finite_atoms({0, 1}, {0.5, 0.6}), DomainError);
    EXPECT_THROW(AnalyticLaw1D::finite_atoms({0, 1}, {1.5, -0.5}), DomainError);
}

TEST(Sample, PointMassAndDeterminism) {
    const auto pm = AnalyticLaw1D::point_mass(2.0).sample(3, 99);
    EXPECT_EQ(pm, (std::vector<double>{2.0, 2.0, 2.0}));
    const auto a = AnalyticLaw1D::normal(0, 1).sample(10, 5);
    const auto b = AnalyticLaw1D::normal(0, 1).sample(10, 5);
    EXPECT_EQ(a, b);
}

TEST(Sample, UniformMean) {
    const auto s = AnalyticLaw1D::uniform(0, 1).sample(100000, 1);
    double m = 0.0;
    for (double v : s) m += v;
    EXPECT_NEAR(m / s.size(), 0.5, 0.01);
}

TEST(RadialLaw, GaussianCovariance) {
    const auto s = RadialLawQ::standard_gaussian(2).sample(100000, 1);
    double c00 = 0, c01 = 0, c11 = 0, m0 = 0, m1 = 0;
    for (const auto& z : s) {
        m0 += z[0];
        m1 += z[1];
        c00 += z[0] * z[0];
        c01 += z[0] * z[1];
        c11 += z[1] * z[1];
    }
    const double n = static_cast<double>(s.size());
    EXPECT_NEAR(m0 / n, 0.0, 0.02);
    EXPECT_NEAR(m1 / n, 0.0, 0.02);
    EXPECT_NEAR(c00 / n, 1.0, 0.02);
    EXPECT_NEAR(c01 / n, 0.0, 0.02);
    EXPECT_NEAR(c11 / n, 1.0, 0.02);
}

TEST(RadialLaw, BallCovarianceIsIsotropic) {
    const auto law = RadialLawQ::uniform_ball(3, 2.0);
    const auto s = law.sample(100000, 3);
    std::vector<double> diag(3, 0.0);
    double off = 0.0;
    for (const auto& z : s) {
        for (int k = 0; k < 3; ++k) diag[k] += z[k] * z[k];
        off += z[0] * z[2];
        double r = 0;
        for (double v : z) r += v * v;
        ASSERT_LE(r, 4.0 + 1e-12);
    }
    const double n = static_cast<double>(s.size());
    for (double v : diag) EXPECT_NEAR(v / n, law.second_moment() / 3.0, 0.02);
    EXPECT_NEAR(off / n, 0.0, 0.02);
}

TEST(Truncation, SymmetricNormalIsCentered) {
    const auto t = TruncatedLaw1D::symmetric(AnalyticLaw1D::normal(0, 1), 1.0);
    EXPECT_LT(std::abs(t.centering_residual()), 1e-15);
    const auto z = AnalyticLaw1D::normal(0, 1);
    // atom 1 - F(1) + F(-1) at zero plus F(0) - F(-1)
    EXPECT_NEAR(t.cdf(0.0), 1.0 - z.cdf(1.0) + z.cdf(0.0), 1e-15);
    EXPECT_NEAR(t.cdf(0.0), 0.658655, 1e-6);
}

TEST(Truncation, AutomaticBetaSolvesCentering) {
    const auto base = AnalyticLaw1D::exponential(1.0).affine(-1.0, 1.0);
    const auto t = TruncatedLaw1D::centered(base, -0.5);
    EXPECT_LT(std::abs(t.centering_residual()), 1e-10);
    EXPECT_GT(t.beta(), 0.0);
    const auto n = TruncatedLaw1D::centered(AnalyticLaw1D::normal(0, 1), -2.0);
    EXPECT_NEAR(n.beta(), 2.0, 1e-9);
}

TEST(Truncation, RejectsUncenteredPair) {
    EXPECT_THROW(TruncatedLaw1D(AnalyticLaw1D::normal(0, 1), -1.0, 2.0), DomainError);
}

TEST(Truncation, LawIsConsistent) {
    const auto t = TruncatedLaw1D::symmetric(AnalyticLaw1D::normal(0, 1), 1.5);
    EXPECT_NEAR(t.cdf(10.0), 1.0, 1e-15);
    EXPECT_NEAR(t.cdf(-10.0), 0.0, 1e-15);
    EXPECT_NEAR(t.cdf(0.0) - t.cdf_left(0.0), t.atom_at_zero(), 1e-15);
    EXPECT_NEAR(t.mean(), 0.0, 1e-15);
    const auto base = t.base();
    const double m2 = integrate([&](double z) { return z * z * base.density(z); }, -1.5, 1.5);
    EXPECT_NEAR(t.second_moment(), m2, 1e-13);
    EXPECT_EQ(t.support().lo, -1.5);
    EXPECT_EQ(t.support().hi, 1.5);
}

TEST(AffineLaw, ShiftsAndScales) {
    const auto t = TruncatedLaw1D::symmetric(AnalyticLaw1D::uniform(-1, 1), 1.0);
    AffineLaw<TruncatedLaw1D> a(t, 2.0, 0.5);
    EXPECT_NEAR(a.mean(), 2.0, 1e-15);
    EXPECT_NEAR(a.cdf(2.0), 0.5, 1e-15);
    EXPECT_NEAR(a.partial_moment(10.0), 2.0, 1e-15);
    EXPECT_NEAR(a.second_moment(), 4.0 + 0.25 / 3.0, 1e-14);
    EXPECT_DOUBLE_EQ(a.support().lo, 1.5);
    AffineLaw<TruncatedLaw1D> degenerate(t, 2.0, 0.0);
    EXPECT_EQ(degenerate.cdf(1.999), 0.0);
    EXPECT_EQ(degenerate.cdf(2.0), 1.0);
}

TEST(MixtureLaw, WeightsComponents) {
    std::vector<AnalyticLaw1D> comps{AnalyticLaw1D::uniform(0, 1), AnalyticLaw1D::point_mass(3.0)};
    MixtureLaw<AnalyticLaw1D> mix(comps, {0.25, 0.75});
    EXPECT_NEAR(mix.mean(), 0.125 + 2.25, 1e-15);
    EXPECT_NEAR(mix.cdf(0.5), 0.125, 1e-15);
    EXPECT_NEAR(mix.cdf_left(3.0), 0.25, 1e-15);
    EXPECT_EQ(mix.support().hi, 3.0);
}
