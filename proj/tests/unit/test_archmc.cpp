#include <gtest/gtest.h>

#include <cmath>

#include "martquant/archmc.hpp"

using namespace martquant;

namespace {

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// int_{|z|>a} z^2 phi(z) dz by composite Simpson on [a, 40].
double tail_1d(double a) {
    const std::size_t m = 400000;
    const double h = (40.0 - a) / static_cast<double>(m);
    double s = 0.0;
    for (std::size_t i = 0; i <= m; ++i) {
        const double z = a + h * static_cast<double>(i);
        const double c = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += c * z * z * phi(z);
    }
    return 2.0 * s * h / 3.0;
}

StepNoise ball1(double a) { return StepNoise::ball(1, a); }

bool within(const Estimate& e, double v, double k = 3.0) { return std::abs(e.mean - v) <= k * e.se + 1e-15; }

}  // namespace

TEST(Simulate, ZeroThetaFreezesPaths) {
    auto arch = ArchSpec::homogeneous(Theta::constant(0.0), 4);
    CoupledOptions opt;
    opt.paths = 1000;
    opt.store_paths = 10;
    const auto s = simulate_coupled(arch, {ball1(1.0)}, AnalyticLaw1D::normal(0.3, 1.0), opt);
    for (std::size_t p = 0; p < 10; ++p)
        for (std::size_t k = 0; k <= 4; ++k) {
            EXPECT_EQ(s.x[p][k], s.x[p][0]);
            EXPECT_EQ(s.xb[p][k], s.x[p][0]);
        }
    for (const auto& e : s.err_sq) EXPECT_EQ(e.mean, 0.0);
}

TEST(Simulate, HugeRadiusNeverClips) {
    auto arch = ArchSpec::homogeneous(Theta::scalar_affine_abs(1.0, 0.5, 0.3), 5);
    CoupledOptions opt;
    opt.paths = 20000;
    const auto s = simulate_coupled(arch, {ball1(1e9)}, AnalyticLaw1D::normal(0.0, 1.0), opt);
    double worst = 0.0;
    for (const auto& e : s.abs_err) worst = std::max(worst, e.mean);
    EXPECT_EQ(worst, 0.0);
}

TEST(Simulate, OneStepTruncationError) {
    auto arch = ArchSpec::homogeneous(Theta::constant(1.0), 1);
    CoupledOptions opt;
    opt.paths = 1000000;
    opt.seed = 7;
    const auto s = simulate_coupled(arch, {ball1(1.0)}, Point{0.0}, opt);
    const double oracle = tail_1d(1.0);
    EXPECT_NEAR(oracle, 2.0 * (phi(1.0) + 0.5 * std::erfc(1.0 / std::sqrt(2.0))), 1e-10);
    EXPECT_TRUE(within(s.err_sq[1], oracle)) << s.err_sq[1].mean << " +- " << s.err_sq[1].se << " vs " << oracle;
}

TEST(Simulate, DeterministicAcrossThreads) {
    auto arch = ArchSpec::homogeneous(Theta::scalar_affine_abs(1.0, 1.0, 0.3), 3);
    CoupledOptions opt;
    opt.paths = 9000;
    const auto a = simulate_coupled(arch, {ball1(1.2)}, AnalyticLaw1D::normal(0.0, 1.0), opt);
    opt.threads = 3;
    const auto b = simulate_coupled(arch, {ball1(1.2)}, AnalyticLaw1D::normal(0.0, 1.0), opt);
    for (std::size_t k = 0; k <= 3; ++k) {
        EXPECT_EQ(a.err_sq[k].mean, b.err_sq[k].mean);
        EXPECT_EQ(a.err_sq[k].se, b.err_sq[k].se);
        EXPECT_EQ(a.x_sq[k].mean, b.x_sq[k].mean);
    }
}

TEST(Simulate, LargerRadiusNeverWorse) {
    auto arch = ArchSpec::euler(Theta::scalar_affine_abs(1.0, 1.0, 0.5), 1.0, 5);
    CoupledOptions opt;
    opt.paths = 200000;
    double prev = std::numeric_limits<double>::infinity();
    for (double a : {1.0, 1.5, 2.0}) {
        const auto s = simulate_coupled(arch, {ball1(a)}, AnalyticLaw1D::normal(0.0, 1.0), opt);
        EXPECT_LE(s.err_sq[5].mean, prev) << a;
        prev = s.err_sq[5].mean;
    }
}

TEST(Simulate, DoobFactor) {
    auto arch = ArchSpec::euler(Theta::scalar_affine_abs(1.0, 1.0, 0.5), 1.0, 5);
    CoupledOptions opt;
    opt.paths = 200000;
    const auto s = simulate_coupled(arch, {ball1(1.5)}, AnalyticLaw1D::normal(0.0, 1.0), opt);
    const double lhs = std::sqrt(s.runmax_sq[5].mean);
    const double rhs = 2.0 * std::sqrt(s.err_sq[5].mean) * (1.0 + 3.0 * s.err_sq[5].se / s.err_sq[5].mean);
    EXPECT_LE(lhs, rhs);
    EXPECT_GE(s.runmax_sq[5].mean, s.err_sq[5].mean);
}

TEST(TruncationBound, ZeroInputsGiveZero) {
    TruncationBoundInputs in;
    in.lip = {0.3, 0.2};
    in.lip_fr = in.lip;
    in.c = {1.0, 2.0};
    in.c_fr = in.c;
    in.x0_sq = 4.0;
    in.z_err_sq = {0.0, 0.0};
    in.z_coord_err_sq = {0.0, 0.0};
    const auto b = truncation_error_bound(in);
    for (double v : b.refined) EXPECT_EQ(v, 0.0);
    for (double v : b.product) EXPECT_EQ(v, 0.0);
    for (double v : b.frobenius) EXPECT_EQ(v, 0.0);
}

TEST(TruncationBound, SumFormMatchesGronwallRecursion) {
    CounterRng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 1 + rep % 7;
        TruncationBoundInputs in;
        for (std::size_t k = 0; k < n; ++k) {
            in.lip.push_back(rng.uniform());
            in.lip_fr.push_back(in.lip.back() * (1.0 + rng.uniform()));
            in.c.push_back(rng.uniform());
            in.c_fr.push_back(in.c.back() * (1.0 + rng.uniform()));
            in.z_err_sq.push_back(0.1 * rng.uniform());
            in.z_coord_err_sq.push_back(in.z_err_sq.back());
        }
        in.noise_second_moment = 1.0 + rng.uniform();
        in.x0_sq = 2.0 * rng.uniform();
        in.x0_err_sq = 0.05 * rng.uniform();
        const auto b = truncation_error_bound(in);
        // e_{k+1} = (1 + m2 L_k^2) e_k + c_k (1 + M_k) z_k with M_k the moment envelope
        const auto M = second_moment_envelope(in.c_fr, in.x0_sq);
        double e = in.x0_err_sq;
        for (std::size_t k = 0; k <= n; ++k) {
            EXPECT_NEAR(b.refined[k], e, 1e-12 * (1.0 + e));
            EXPECT_LE(b.refined[k], b.product[k] * (1.0 + 1e-12));
            EXPECT_DOUBLE_EQ(b.doob[k], 4.0 * b.refined[k]);
            if (k < n) e = (1.0 + in.noise_second_moment * in.lip[k] * in.lip[k]) * e + in.c[k] * (1.0 + M[k]) * in.z_err_sq[k];
        }
    }
}

TEST(TruncationBound, OneStepConstantThetaIsTight) {
    const double s = 0.7, a = 1.5;
    auto arch = ArchSpec::homogeneous(Theta::constant(s), 1);
    const auto in = TruncationBoundInputs::from(arch, {ball1(a)}, 0.0);
    const auto b = truncation_error_bound(in);
    EXPECT_NEAR(b.refined[1], s * s * tail_1d(a), 1e-10);
    CoupledOptions opt;
    opt.paths = 400000;
    const auto sim = simulate_coupled(arch, {ball1(a)}, Point{0.0}, opt);
    EXPECT_TRUE(within(sim.err_sq[1], b.refined[1])) << sim.err_sq[1].mean << " vs " << b.refined[1];
}

TEST(TruncationBound, EulerDisplayMatchesProductForm) {
    const double T = 1.5, L = 0.8, sc = 0.6;
    const std::size_t n = 6;
    auto arch = ArchSpec::euler(Theta::scalar_affine_abs(1.0, L / sc, sc), T, n);
    const double a = 1.7;
    auto in = TruncationBoundInputs::from(arch, {ball1(a)}, 0.4, 0.01);
    const auto b = truncation_error_bound(in);
    const auto th = Theta::scalar_affine_abs(1.0, L / sc, sc);
    const auto k0 = th.constants();
    EulerConstants e;
    e.horizon = T;
    e.n = n;
    e.q = 1;
    e.lip = k0.lip;
    e.c = k0.c;
    e.c_fr = k0.c_fr;
    e.x0_sq = 0.4;
    e.x0_err_sq = 0.01;
    e.tail = gaussian_tail_exact(a, 1);
    const auto disp = euler_truncation_bound(e);
    for (std::size_t k = 0; k <= n; ++k) {
        EXPECT_NEAR(disp.discrete[k], b.product[k], 1e-12 * (1.0 + b.product[k])) << k;
        EXPECT_LE(disp.discrete[k], disp.exponential[k] * (1.0 + 1e-15));
    }
    EXPECT_GE(disp.doob, 4.0 * disp.exponential[n] - 1e-15);
}

TEST(TruncationBound, EmpiricalBelowBound) {
    auto arch = ArchSpec::euler(Theta::scalar_affine_abs(1.0, 1.0, 0.5, 0.05), 1.0, 5);
    for (double a : {1.0, 2.0}) {
        CoupledOptions opt;
        opt.paths = 100000;
        const auto s = simulate_coupled(arch, {ball1(a)}, AnalyticLaw1D::normal(0.0, 0.5), opt);
        const auto b = truncation_error_bound(TruncationBoundInputs::from(arch, {ball1(a)}, 0.25));
        for (std::size_t k = 0; k <= 5; ++k) {
            EXPECT_GE(b.refined[k] - s.err_sq[k].mean, -3.0 * s.err_sq[k].se) << k;
            EXPECT_GE(b.frobenius[k] - s.err_sq[k].mean, -3.0 * s.err_sq[k].se) << k;
        }
    }
}

TEST(GaussianTail, QEqualsOne) {
    EXPECT_NEAR(gaussian_tail_bound(2.0, 1), std::sqrt(2.0 / M_PI) * 2.5 * std::exp(-2.0), 1e-15);
    EXPECT_NEAR(gaussian_tail_bound(2.0, 1), 0.26996, 1e-5);
    EXPECT_NEAR(gaussian_tail_exact(2.0, 1), tail_1d(2.0), 1e-10);
    for (double a : {1.0, 2.0, 3.0, 4.0}) EXPECT_LE(tail_1d(a), gaussian_tail_bound(a, 1));
    EXPECT_EQ(gaussian_tail_bound(std::numeric_limits<double>::infinity(), 1), 0.0);
    EXPECT_LT(gaussian_tail_bound(40.0, 1), 1e-300);
}

TEST(GaussianTail, QEqualsTwoRadialOracle) {
    for (double a : {3.0, 4.0, 5.0}) {
        // int_a^inf r^2 r e^{-r^2/2} dr = e^{-a^2/2}(a^2 + 2)
        const double radial = std::exp(-a * a / 2.0) * (a * a + 2.0);
        EXPECT_NEAR(gaussian_tail_exact(a, 2), radial, 1e-14);
        EXPECT_LE(radial, gaussian_tail_bound(a, 2));
    }
    EXPECT_NEAR(gaussian_tail_bound(4.0, 2), 2.0 * std::exp(-8.0) * std::pow(std::exp(1.0) * 4.0, 2.0), 1e-13);
    EXPECT_THROW(gaussian_tail_bound(2.0, 2), DomainError);
    for (double a : {3.0, 4.0, 6.0}) EXPECT_LE(gaussian_tail_exact(a, 3), gaussian_tail_bound(a, 3));
}

TEST(SelectTruncation, Examples) {
    EXPECT_NEAR(select_truncation(std::exp(2.0), 2.0), 2.0, 1e-15);
    EXPECT_NEAR(select_truncation(2.0, 100.0, 2), std::sqrt(100.0 * std::log(2.0)), 1e-15);
    EXPECT_NEAR(select_truncation(1e4, 4.0, 1), 6.0697, 1e-4);
    EXPECT_GT(select_truncation(2.0, 1.0, 2), 2.0);
    EXPECT_THROW(select_truncation(1.0, 1.0), DomainError);
}

TEST(TruncatedNoise, ConvexlyDominatedByFullNoise) {
    std::vector<double> x, w;
    const std::size_t m = 101;
    for (std::size_t i = 0; i < m; ++i) x.push_back(-4.0 + 8.0 * static_cast<double>(i) / static_cast<double>(m - 1));
    double s = 0.0;
    for (double v : x) s += (w.emplace_back(phi(v)), phi(v));
    for (double& v : w) v /= s;
    const auto z = DiscreteDistribution::from_1d(x, w);
    std::vector<double> xa, wa;
    double clipped = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (std::abs(x[i]) <= 1.5 && std::abs(x[i]) > 1e-12) {
            xa.push_back(x[i]);
            wa.push_back(w[i]);
        } else {
            clipped += w[i];
        }
    }
    xa.push_back(0.0);
    wa.push_back(clipped);
    std::vector<std::size_t> idx(xa.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return xa[a] < xa[b]; });
    std::vector<double> xs, ws;
    for (auto i : idx) {
        xs.push_back(xa[i]);
        ws.push_back(wa[i]);
    }
    EXPECT_EQ(convex_order_check(DiscreteDistribution::from_1d(xs, ws), z).status, OrderStatus::Dominated);
}

TEST(Domination, PathMaxCall) {
    auto arch = ArchSpec::homogeneous(Theta::scalar_affine_abs(1.0, 1.0, 1.0), 4);
    CoupledOptions opt;
    opt.paths = 100000;
    const auto battery = standard_path_battery(0.0, 1.0);
    const auto rep = domination_test(arch, ball1(1.5), Point{0.0}, {battery.front()}, opt);
    EXPECT_TRUE(rep.all_pass());
    EXPECT_LT(rep.rows[0].approx.mean, rep.rows[0].exact.mean);
}

TEST(Domination, UntruncatedNoiseGivesEquality) {
    auto arch = ArchSpec::homogeneous(Theta::constant(0.5), 4);
    CoupledOptions opt;
    opt.paths = 20000;
    const auto battery = standard_path_battery();
    ASSERT_EQ(battery.size(), 20u);
    const auto rep = domination_test(arch, StepNoise::exact(AnalyticLaw1D::normal(0.0, 1.0)), Point{0.0}, battery, opt);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.diff.mean, 0.0) << r.name;
        EXPECT_EQ(r.approx.mean, r.exact.mean) << r.name;
    }
    EXPECT_TRUE(rep.all_pass());
}

TEST(Domination, BatteryIsConvexAlongSegments) {
    CounterRng rng(3);
    const auto battery = standard_path_battery(0.1, 0.8);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> a(5), b(5), m(5);
        for (std::size_t i = 0; i < 5; ++i) {
            a[i] = 2.0 * rng.uniform() - 1.0;
            b[i] = 2.0 * rng.uniform() - 1.0;
        }
        const double t = rng.uniform();
        for (std::size_t i = 0; i < 5; ++i) m[i] = t * a[i] + (1.0 - t) * b[i];
        for (const auto& f : battery) EXPECT_LE(f.f(m), t * f.f(a) + (1.0 - t) * f.f(b) + 1e-12) << f.name;
    }
}

TEST(InnovationBound, ZeroAndOneStep) {
    InnovationBoundInputs in;
    in.lip = {0.5, 0.5};
    in.theta_sq = {1.0, 1.0};
    in.z_err_sq = {0.0, 0.0};
    in.dual_sq = {0.0, 0.0};
    for (double v : quantized_innovation_bound(in)) EXPECT_EQ(v, 0.0);
    InnovationBoundInputs one;
    one.lip = {0.0};
    one.x0_err_sq = 0.1;
    one.theta_sq = {0.49};
    one.z_err_sq = {0.2};
    one.dual_sq = {0.03};
    const auto b = quantized_innovation_bound(one);
    EXPECT_DOUBLE_EQ(b[0], 0.1);
    EXPECT_DOUBLE_EQ(b[1], 0.1 + 0.49 * 0.2 + 0.03);
}

TEST(InnovationBound, OneStepPythagorasByMonteCarlo) {
    const double s = 0.5;
    auto arch = ArchSpec::homogeneous(Theta::constant(s), 1);
    const auto nz = StepNoise::quantized(AnalyticLaw1D::normal(0.0, 1.0), 5);
    const auto ch = build_chain(arch, {nz}, AnalyticLaw1D::point_mass(0.0), {1, 9});
    InnovationBoundInputs in;
    in.lip = {0.0};
    in.theta_sq = {s * s};
    in.z_err_sq = {nz.error_sq()};
    in.dual_sq = {ch.steps[0].dual_distortion * ch.steps[0].dual_distortion};
    const auto b = quantized_innovation_bound(in);
    CoupledOptions opt;
    opt.paths = 400000;
    opt.chain = &ch;
    const auto sim = simulate_coupled(arch, {nz}, Point{0.0}, opt);
    EXPECT_TRUE(within(sim.hat_err_sq[1], b[1])) << sim.hat_err_sq[1].mean << " +- " << sim.hat_err_sq[1].se << " vs " << b[1];
}

TEST(InnovationBound, EmpiricalBelowBoundOnEulerChain) {
    auto arch = ArchSpec::euler(Theta::scalar_affine_abs(1.0, 1.0, 0.5, 0.05), 1.0, 3);
    const auto nz = StepNoise::quantized(AnalyticLaw1D::normal(0.0, 1.0), 7);
    const auto x0 = AnalyticLaw1D::normal(0.0, 0.5);
    const auto ch = build_chain(arch, {nz}, x0, {15, 21, 21, 21});
    CoupledOptions opt;
    opt.paths = 100000;
    opt.chain = &ch;
    const auto sim = simulate_coupled(arch, {nz}, x0, opt);
    InnovationBoundInputs in;
    in.x0_err_sq = ch.x0_distortion * ch.x0_distortion;
    for (std::size_t k = 0; k < 3; ++k) {
        in.lip.push_back(arch.theta[k].constants().lip);
        in.theta_sq.push_back(sim.theta_sq[k].mean + 3.0 * sim.theta_sq[k].se);
        in.z_err_sq.push_back(nz.error_sq());
        in.dual_sq.push_back(ch.steps[k].dual_distortion * ch.steps[k].dual_distortion);
    }
    const auto b = quantized_innovation_bound(in);
    for (std::size_t k = 0; k <= 3; ++k) EXPECT_GE(b[k] - sim.hat_err_sq[k].mean, -3.0 * sim.hat_err_sq[k].se) << k;
    // X_hat_0 is the Voronoi projection, so its error is the primal distortion
    EXPECT_TRUE(within(sim.hat_err_sq[0], in.x0_err_sq));
}

TEST(EulerQuantized, HandComputedTwoSteps) {
    EulerQuantizedInputs in;
    in.horizon = 1.0;
    in.n = 2;
    in.lip = 0.5;
    in.c_vor_d = 1.0;
    in.c_vor_q = 2.0;
    in.c_del = 3.0;
    in.sigma_x0 = 0.5;
    in.n0 = 4;
    in.sigma_z = {1.0, 1.0};
    in.nz = {9, 9};
    in.sigma_tilde = {0.7, 0.8};
    in.nk = {16, 16};
    in.theta_sq = {0.3, 0.4};
    const auto b = euler_quantized_bound(in);
    const double x0t = 0.25 / 16.0;
    EXPECT_NEAR(b[0], std::sqrt(x0t), 1e-15);
    const double t1 = 0.5 * 0.3 * 4.0 / 81.0 + 9.0 * 0.49 / 256.0;
    const double t2 = 0.5 * 0.4 * 4.0 / 81.0 + 9.0 * 0.64 / 256.0;
    EXPECT_NEAR(b[1], std::sqrt(x0t * std::exp(0.125) + t1), 1e-15);
    EXPECT_NEAR(b[2], std::sqrt(x0t * std::exp(0.25) + std::exp(0.125) * t1 + t2), 1e-15);
    EXPECT_NEAR(euler_theta_envelope(2.0, 1.0, 0.5, 3.0), 2.0 * std::exp(0.5) * 4.0, 1e-14);
}

TEST(PseudoStd, Examples) {
    EXPECT_NEAR(gaussian_pseudo_std(1, 0.0), 1.0, 1e-14);
    EXPECT_NEAR(gaussian_pseudo_std(3, 0.0), std::sqrt(3.0), 1e-14);
    EXPECT_NEAR(gaussian_pseudo_std(1, 1.0), std::cbrt(2.0 * std::sqrt(2.0 / M_PI)), 1e-14);
    const auto d = DiscreteDistribution::from_1d({-1.0, 0.0, 3.0}, {0.25, 0.5, 0.25});
    const double mean = 0.5, var = 0.25 * 2.25 + 0.5 * 0.25 + 0.25 * 6.25;
    EXPECT_NEAR(mean, d.mean()[0], 1e-15);
    EXPECT_NEAR(pseudo_std(d, 2.0), std::sqrt(var), 1e-10);
    // p = 1: median minimizes
    EXPECT_NEAR(pseudo_std(d, 1.0), 0.25 * 1.0 + 0.25 * 3.0, 1e-10);
    const DiscreteDistribution d2({{0.0, 0.0}, {2.0, 0.0}, {0.0, 2.0}, {2.0, 2.0}}, {0.25, 0.25, 0.25, 0.25});
    EXPECT_NEAR(pseudo_std(d2, 3.0), std::sqrt(2.0), 1e-8);
}
