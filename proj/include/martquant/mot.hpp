#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "martquant/dual.hpp"
#include "martquant/errors.hpp"
#include "martquant/laws.hpp"
#include "martquant/lp.hpp"
#include "martquant/order.hpp"
#include "martquant/primal.hpp"

namespace martquant {

// A payoff sees the path (x_0, ..., x_n) as pointers into the marginal grids.
using PathView = std::span<const Point* const>;

struct Payoff {
    std::string name;
    std::function<double(PathView)> f;
    double operator()(PathView p) const { return f(p); }
};

namespace payoffs {

inline double dist2(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) s += (b[c] - a[c]) * (b[c] - a[c]);
    return s;
}

// |x_n - x_0|^2
inline Payoff quadratic() {
    return {"quadratic", [](PathView p) { return dist2(*p.front(), *p.back()); }};
}

// |x_n - x_0|
inline Payoff spread() {
    return {"spread", [](PathView p) { return std::sqrt(dist2(*p.front(), *p.back())); }};
}

// (x_n - x_{n-1} - K)_+ on the first coordinate.
inline Payoff forward_start(double strike) {
    return {"forward_start", [strike](PathView p) {
                const double v = (*p[p.size() - 1])[0] - (*p[p.size() - 2])[0] - strike;
                return v > 0.0 ? v : 0.0;
            }};
}

inline Payoff negated(Payoff c) {
    auto f = c.f;
    return {"-" + c.name, [f](PathView p) { return -f(p); }};
}

}  // namespace payoffs

struct MotProblem {
    std::vector<DiscreteDistribution> marginals;
    Payoff payoff;
    // Optional explicit cost for two marginals, row-major N0 x N1; overrides payoff.
    std::vector<double> table;
    std::size_t budget = 1000000;

    std::size_t product_size() const {
        std::size_t s = 1;
        for (const auto& m : marginals) {
            if (m.size() != 0 && s > budget / m.size() + 1) return budget + 1;
            s *= m.size();
        }
        return s;
    }
};

struct SparseCoupling {
    std::vector<std::vector<std::size_t>> index;
    std::vector<double> mass;
};

struct MotResult {
    double lower = 0.0;
    double upper = 0.0;
    SparseCoupling lower_coupling, upper_coupling;
    double marginal_residual = 0.0;
    double martingale_residual = 0.0;
    std::size_t lp_iterations = 0;
    double runtime_ms = 0.0;
};

struct MotOptions {
    LpOptions lp;
    bool check_order = true;
    unsigned threads = 1;
    double coupling_cutoff = 1e-15;  // masses below are dropped from the sparse couplings
};

namespace detail {

inline std::vector<std::size_t> unravel(std::size_t k, const std::vector<std::size_t>& dims) {
    std::vector<std::size_t> idx(dims.size());
    for (std::size_t t = dims.size(); t-- > 0;) {
        idx[t] = k % dims[t];
        k /= dims[t];
    }
    return idx;
}

}  // namespace detail

// Variables p over the product grid (last index fastest). Rows: one per marginal atom,
// then for each k < n, each prefix (i_0..i_k) and coordinate c the martingale equation.
inline LinearProgram build_mot_lp(const MotProblem& pb, Sense sense) {
    const auto& mk = pb.marginals;
    if (mk.size() < 2) throw DomainError("MOT needs at least two marginals");
    const std::size_t d = mk.front().dim();
    for (const auto& m : mk)
        if (m.dim() != d) throw DimensionMismatch("marginal dimensions differ");
    const std::size_t total = pb.product_size();
    if (total > pb.budget)
        throw BudgetExceeded("product grid has more than " + std::to_string(pb.budget) + " entries");
    const std::size_t n = mk.size() - 1;
    std::vector<std::size_t> dims;
    for (const auto& m : mk) dims.push_back(m.size());
    if (!pb.table.empty() && (n != 1 || pb.table.size() != total))
        throw DimensionMismatch("payoff table must be N0 x N1 for two marginals");
    if (pb.table.empty() && !pb.payoff.f) throw DomainError("MOT problem has no payoff");

    std::vector<std::size_t> marg_off(n + 2, 0), prefix_count(n + 1, 1), mart_off(n + 1, 0);
    for (std::size_t k = 0; k <= n; ++k) marg_off[k + 1] = marg_off[k] + dims[k];
    std::size_t rows = marg_off[n + 1];
    for (std::size_t k = 0; k < n; ++k) {
        prefix_count[k] = (k == 0 ? 1 : prefix_count[k - 1]) * dims[k];
        mart_off[k] = rows;
        rows += prefix_count[k] * d;
    }
    LinearProgram lp(rows, total, sense);
    std::vector<const Point*> path(n + 1);
    for (std::size_t col = 0; col < total; ++col) {
        const auto idx = detail::unravel(col, dims);
        for (std::size_t k = 0; k <= n; ++k) {
            path[k] = &mk[k].point(idx[k]);
            lp.coeff(marg_off[k] + idx[k], col) = 1.0;
        }
        std::size_t prefix = 0;
        for (std::size_t k = 0; k < n; ++k) {
            prefix = prefix * dims[k] + idx[k];
            for (std::size_t c = 0; c < d; ++c)
                lp.coeff(mart_off[k] + prefix * d + c, col) = (*path[k + 1])[c] - (*path[k])[c];
        }
        lp.objective(col) = pb.table.empty() ? pb.payoff(PathView(path.data(), path.size())) : pb.table[col];
    }
    for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t i = 0; i < dims[k]; ++i) lp.rhs(marg_off[k] + i) = mk[k].weight(i);
    return lp;
}

inline void export_mot_lp(const MotProblem& pb, const std::string& path_prefix) {
    for (auto [sense, tag] : {std::pair{Sense::Minimize, "lower"}, std::pair{Sense::Maximize, "upper"}}) {
        std::ofstream os(path_prefix + "_" + tag + ".lp");
        if (!os) throw Error("cannot write " + path_prefix + "_" + tag + ".lp");
        write_lp_file(build_mot_lp(pb, sense), os);
    }
}

inline MotResult mot_bounds(const MotProblem& pb, const MotOptions& opt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    if (pb.product_size() > pb.budget)
        throw BudgetExceeded("product grid has more than " + std::to_string(pb.budget) + " entries");
    if (opt.check_order) {
        for (std::size_t k = 0; k + 1 < pb.marginals.size(); ++k) {
            auto r = convex_order_check(pb.marginals[k], pb.marginals[k + 1], opt.lp);
            if (!r.dominated())
                throw NotInConvexOrder("marginals " + std::to_string(k) + " and " + std::to_string(k + 1) +
                                           " are not in convex order",
                                       r.witness);
        }
    }
    const LinearProgram lo = build_mot_lp(pb, Sense::Minimize);
    LinearProgram hi = lo;
    hi.set_sense(Sense::Maximize);
    LpSolution slo, shi;
    if (opt.threads > 1) {
        std::thread t([&] { shi = solve(hi, opt.lp); });
        slo = solve(lo, opt.lp);
        t.join();
    } else {
        slo = solve(lo, opt.lp);
        shi = solve(hi, opt.lp);
    }
    for (const auto* s : {&slo, &shi}) {
        if (s->status == LpStatus::Infeasible)
            throw NotInConvexOrder("MOT linear program is infeasible", std::nullopt);
        if (s->status != LpStatus::Optimal)
            throw Error(std::string("MOT linear program ended with status ") + to_string(s->status));
    }
    MotResult res;
    res.lower = slo.objective;
    res.upper = shi.objective;
    res.lp_iterations = slo.iterations + shi.iterations;
    std::vector<std::size_t> dims;
    for (const auto& m : pb.marginals) dims.push_back(m.size());
    auto sparse = [&](const LpSolution& s) {
        SparseCoupling c;
        for (std::size_t k = 0; k < s.x.size(); ++k)
            if (s.x[k] > opt.coupling_cutoff) {
                c.index.push_back(detail::unravel(k, dims));
                c.mass.push_back(s.x[k]);
            }
        return c;
    };
    res.lower_coupling = sparse(slo);
    res.upper_coupling = sparse(shi);
    // Residuals from the dense solutions: marginal rows vs martingale rows.
    std::size_t marg_rows = 0;
    for (auto d : dims) marg_rows += d;
    for (const auto* s : {&slo, &shi})
        for (std::size_t i = 0; i < lo.rows(); ++i) {
            double r = -lo.rhs(i);
            for (std::size_t j = 0; j < lo.cols(); ++j) r += lo.coeff(i, j) * s->x[j];
            double& slot = i < marg_rows ? res.marginal_residual : res.martingale_residual;
            slot = std::max(slot, std::abs(r));
        }
    res.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// Convenience for two 1D marginals and a cost c(x, y).
inline MotProblem make_mot_problem(DiscreteDistribution mu0, DiscreteDistribution mu1, Payoff c) {
    MotProblem pb;
    pb.marginals = {std::move(mu0), std::move(mu1)};
    pb.payoff = std::move(c);
    return pb;
}

struct StabilityRow {
    std::size_t n = 0, m = 0;
    double lower = 0.0, upper = 0.0;
    double runtime_ms = 0.0;
    std::optional<double> closed_form;  // E y^2 - E x^2 for the quadratic payoff
};

struct StabilityOptions {
    MotOptions mot;
    LloydOptions primal;
    DualLloydOptions dual;
};

// Primal quantizer for the first marginal, dual quantizer for the second.
inline std::pair<DiscreteDistribution, DiscreteDistribution> stability_marginals(const AnalyticLaw1D& mu0,
                                                                                  const AnalyticLaw1D& mu1,
                                                                                  std::size_t n, std::size_t m,
                                                                                  const StabilityOptions& opt = {}) {
    if (!mu1.support().bounded()) throw DomainError("second marginal must be compactly supported");
    auto p = lloyd_1d(mu0, n, std::nullopt, opt.primal);
    auto q = dual_lloyd_1d(mu1, m, std::nullopt, opt.dual);
    auto w0 = p.weights, w1 = q.weights;
    // Renormalize away the last-ulp drift of the closed-form weights.
    auto fix = [](std::vector<double>& w) {
        double s = 0.0;
        for (double v : w) s += v;
        for (double& v : w) v /= s;
    };
    fix(w0);
    fix(w1);
    return {DiscreteDistribution::from_1d(p.grid.points(), w0, 1e-9),
            DiscreteDistribution::from_1d(q.grid.points(), w1, 1e-9)};
}

inline std::vector<StabilityRow> stability_experiment(const AnalyticLaw1D& mu0, const AnalyticLaw1D& mu1, const Payoff& c,
                                                      const std::vector<std::pair<std::size_t, std::size_t>>& levels,
                                                      const StabilityOptions& opt = {}) {
    std::vector<StabilityRow> rows;
    for (auto [n, m] : levels) {
        const auto t0 = std::chrono::steady_clock::now();
        auto [a, b] = stability_marginals(mu0, mu1, n, m, opt);
        const double closed = b.second_moment() - a.second_moment();
        auto r = mot_bounds(make_mot_problem(a, b, c), opt.mot);
        StabilityRow row;
        row.n = n;
        row.m = m;
        row.lower = r.lower;
        row.upper = r.upper;
        if (c.name == "quadratic") row.closed_form = closed;
        row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(row);
    }
    return rows;
}

// sqrt(e_{2,N}(mu0)^2 + d_{2,M}(mu1)^2) at optimized grids.
inline double w2_coupling_bound(const AnalyticLaw1D& mu0, const AnalyticLaw1D& mu1, std::size_t n, std::size_t m,
                                const StabilityOptions& opt = {}) {
    auto primal_err = [&]() -> double {
        if (mu0.kind() == AnalyticLaw1D::Kind::PointMass) return 0.0;
        if (mu0.is_atomic() && mu0.atoms().size() <= n) return 0.0;
        return lloyd_1d(mu0, n, std::nullopt, opt.primal).distortion;
    };
    auto dual_err = [&]() -> double {
        if (mu1.kind() == AnalyticLaw1D::Kind::PointMass) return 0.0;
        return dual_lloyd_1d(mu1, m, std::nullopt, opt.dual).distortion;
    };
    const double e = primal_err(), d = dual_err();
    return std::sqrt(e * e + d * d);
}

}  // namespace martquant
