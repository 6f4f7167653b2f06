#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "martquant/errors.hpp"
#include "martquant/laws.hpp"
#include "martquant/lp.hpp"
#include "martquant/quadrature.hpp"
#include "martquant/rng.hpp"

namespace martquant {

// Finitely supported law on R^d.
class DiscreteDistribution {
public:
    DiscreteDistribution() = default;

    DiscreteDistribution(std::vector<Point> points, std::vector<double> weights, double sum_tol = 1e-12)
        : points_(std::move(points)), weights_(std::move(weights)) {
        if (points_.empty()) throw DomainError("distribution needs at least one point");
        if (points_.size() != weights_.size()) throw DimensionMismatch("points and weights differ in length");
        dim_ = points_.front().size();
        if (dim_ == 0) throw DimensionMismatch("points must have positive dimension");
        double s = 0.0;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (points_[i].size() != dim_) throw DimensionMismatch("inconsistent point dimension");
            for (double v : points_[i])
                if (!std::isfinite(v)) throw DomainError("non-finite point coordinate");
            if (!(weights_[i] >= 0.0)) throw DomainError("weights must be nonnegative");
            s += weights_[i];
        }
        if (std::abs(s - 1.0) > sum_tol) throw DomainError("weights must sum to 1");
        std::vector<std::size_t> idx(points_.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return points_[a] < points_[b]; });
        for (std::size_t k = 1; k < idx.size(); ++k)
            if (points_[idx[k]] == points_[idx[k - 1]]) throw DomainError("points must be pairwise distinct");
    }

    static DiscreteDistribution from_1d(const std::vector<double>& x, std::vector<double> w, double sum_tol = 1e-12) {
        std::vector<Point> pts;
        pts.reserve(x.size());
        for (double v : x) pts.push_back(Point{v});
        return DiscreteDistribution(std::move(pts), std::move(w), sum_tol);
    }

    // Uniform weights; duplicates merged.
    static DiscreteDistribution empirical(const std::vector<Point>& sample) {
        if (sample.empty()) throw DomainError("empty sample");
        std::vector<Point> s = sample;
        std::sort(s.begin(), s.end());
        std::vector<Point> pts;
        std::vector<double> w;
        const double unit = 1.0 / static_cast<double>(s.size());
        for (const auto& p : s) {
            if (!pts.empty() && pts.back() == p)
                w.back() += unit;
            else {
                pts.push_back(p);
                w.push_back(unit);
            }
        }
        return DiscreteDistribution(std::move(pts), std::move(w), 1e-9);
    }

    static DiscreteDistribution from_law(const AnalyticLaw1D& law) {
        if (!law.is_atomic()) throw DomainError("law is not finitely supported");
        std::vector<double> x, w;
        for (auto [p, q] : law.atoms()) {
            x.push_back(p);
            w.push_back(q);
        }
        return from_1d(x, w, 1e-9);
    }

    std::size_t size() const { return points_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<Point>& points() const { return points_; }
    const std::vector<double>& weights() const { return weights_; }
    const Point& point(std::size_t i) const { return points_[i]; }
    double weight(std::size_t i) const { return weights_[i]; }

    std::vector<double> values_1d() const {
        if (dim_ != 1) throw DimensionMismatch("distribution is not one-dimensional");
        std::vector<double> out(points_.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = points_[i][0];
        return out;
    }

    template <class F>
    double expectation(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < points_.size(); ++i)
            if (weights_[i] != 0.0) s += weights_[i] * f(std::span<const double>(points_[i]));
        return s;
    }

    Point mean() const {
        Point m(dim_, 0.0);
        for (std::size_t i = 0; i < points_.size(); ++i)
            for (std::size_t c = 0; c < dim_; ++c) m[c] += weights_[i] * points_[i][c];
        return m;
    }

    double second_moment() const {
        return expectation([](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += v * v;
            return s;
        });
    }

    AnalyticLaw1D to_law() const {
        auto x = values_1d();
        std::vector<double> xs, ws;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (weights_[i] > 0.0) {
                xs.push_back(x[i]);
                ws.push_back(weights_[i]);
            }
        const double s = std::accumulate(ws.begin(), ws.end(), 0.0);
        for (double& v : ws) v /= s;
        return AnalyticLaw1D::finite_atoms(xs, ws);
    }

private:
    std::vector<Point> points_;
    std::vector<double> weights_;
    std::size_t dim_ = 0;
};

// x -> max_k (intercept_k + <slope_k, x - anchor_k>)
class MaxAffine {
public:
    struct Piece {
        double intercept;
        Point slope;
        Point anchor;
    };

    MaxAffine() = default;
    explicit MaxAffine(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {
        if (pieces_.empty()) throw DomainError("max-affine function needs a piece");
    }

    double operator()(std::span<const double> x) const {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& p : pieces_) {
            double v = p.intercept;
            for (std::size_t c = 0; c < x.size(); ++c) v += p.slope[c] * (x[c] - p.anchor[c]);
            best = std::max(best, v);
        }
        return best;
    }
    double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }

    const std::vector<Piece>& pieces() const { return pieces_; }

private:
    std::vector<Piece> pieces_;
};

struct ConvexTestFunction {
    std::string name;
    std::function<double(std::span<const double>)> f;
    double operator()(std::span<const double> x) const { return f(x); }
};

// Convex functions with linear growth, used as a finite proxy for the convex order.
class ConvexTestBattery {
public:
    const std::vector<ConvexTestFunction>& functions() const { return fns_; }
    std::size_t size() const { return fns_.size(); }
    void add(ConvexTestFunction fn) { fns_.push_back(std::move(fn)); }

    // Coordinate calls and puts at the strikes, |x - a| at the strikes (on the diagonal),
    // the coordinates themselves with both signs.
    static ConvexTestBattery standard(std::size_t dim, const std::vector<double>& strikes) {
        ConvexTestBattery b;
        for (std::size_t c = 0; c < dim; ++c) {
            b.add({"x" + std::to_string(c), [c](std::span<const double> x) { return x[c]; }});
            b.add({"-x" + std::to_string(c), [c](std::span<const double> x) { return -x[c]; }});
            for (double k : strikes) {
                b.add({"call" + std::to_string(c) + "@" + std::to_string(k),
                       [c, k](std::span<const double> x) { return std::max(x[c] - k, 0.0); }});
                b.add({"put" + std::to_string(c) + "@" + std::to_string(k),
                       [c, k](std::span<const double> x) { return std::max(k - x[c], 0.0); }});
            }
        }
        for (double a : strikes)
            b.add({"norm@" + std::to_string(a), [a](std::span<const double> x) {
                       double s = 0.0;
                       for (double v : x) s += (v - a) * (v - a);
                       return std::sqrt(s);
                   }});
        return b;
    }

    // Random max-of-affine functions with unit-norm slopes.
    static ConvexTestBattery random_max_affine(std::size_t dim, std::size_t count, std::size_t pieces,
                                               double intercept_scale, std::uint64_t seed) {
        ConvexTestBattery b;
        CounterRng rng(seed, 0x6261747465727921ULL);
        for (std::size_t k = 0; k < count; ++k) {
            std::vector<MaxAffine::Piece> ps;
            for (std::size_t p = 0; p < pieces; ++p) {
                Point s(dim);
                double nrm = 0.0;
                do {
                    nrm = 0.0;
                    for (auto& v : s) {
                        v = 2.0 * rng.uniform() - 1.0;
                        nrm += v * v;
                    }
                } while (nrm < 1e-6 || nrm > 1.0);
                for (auto& v : s) v /= std::sqrt(nrm);
                ps.push_back({intercept_scale * (2.0 * rng.uniform() - 1.0), s, Point(dim, 0.0)});
            }
            MaxAffine m(std::move(ps));
            b.add({"maxaff" + std::to_string(k), [m](std::span<const double> x) { return m(x); }});
        }
        return b;
    }

    // E_nu phi - E_mu phi for each member; nonnegative for all members when mu <=cvx nu.
    std::vector<double> gaps(const DiscreteDistribution& mu, const DiscreteDistribution& nu) const {
        if (mu.dim() != nu.dim()) throw DimensionMismatch("distributions differ in dimension");
        std::vector<double> out;
        out.reserve(fns_.size());
        for (const auto& fn : fns_) out.push_back(nu.expectation(fn.f) - mu.expectation(fn.f));
        return out;
    }

private:
    std::vector<ConvexTestFunction> fns_;
};

enum class OrderStatus { Dominated, NotDominated, NotDominatedNoWitness };

inline const char* to_string(OrderStatus s) {
    switch (s) {
        case OrderStatus::Dominated: return "Dominated";
        case OrderStatus::NotDominated: return "NotDominated";
        case OrderStatus::NotDominatedNoWitness: return "NotDominatedNoWitness";
    }
    return "?";
}

struct OrderCheckResult {
    OrderStatus status = OrderStatus::NotDominatedNoWitness;
    std::optional<MaxAffine> witness;  // convex psi with E_nu psi < E_mu psi
    double witness_gap = 0.0;          // E_mu psi - E_nu psi
    std::vector<double> coupling;      // row-major N x M martingale coupling when dominated
    std::size_t lp_iterations = 0;
    bool dominated() const { return status == OrderStatus::Dominated; }
};

class NotInConvexOrder : public Error {
public:
    NotInConvexOrder(const std::string& what, std::optional<MaxAffine> witness)
        : Error(what), witness_(std::move(witness)) {}
    const std::optional<MaxAffine>& witness() const noexcept { return witness_; }

private:
    std::optional<MaxAffine> witness_;
};

// Martingale coupling LP: p >= 0 with marginals mu, nu and sum_j p_ij (y_j - x_i) = 0.
inline LinearProgram build_martingale_coupling_lp(const DiscreteDistribution& mu, const DiscreteDistribution& nu) {
    if (mu.dim() != nu.dim()) throw DimensionMismatch("distributions differ in dimension");
    const std::size_t n = mu.size(), m = nu.size(), d = mu.dim();
    LinearProgram lp(n + m + n * d, n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t k = i * m + j;
            lp.coeff(i, k) = 1.0;
            lp.coeff(n + j, k) = 1.0;
            for (std::size_t c = 0; c < d; ++c) lp.coeff(n + m + i * d + c, k) = nu.point(j)[c] - mu.point(i)[c];
        }
    for (std::size_t i = 0; i < n; ++i) lp.rhs(i) = mu.weight(i);
    for (std::size_t j = 0; j < m; ++j) lp.rhs(n + j) = nu.weight(j);
    return lp;
}

// True when plan (row-major, mu.size() x nu.size()) is a martingale coupling of mu and nu
// up to tol; such a plan certifies mu <=cvx nu without solving an LP.
inline bool is_martingale_coupling(const DiscreteDistribution& mu, const DiscreteDistribution& nu,
                                   const std::vector<double>& plan, double tol = 1e-9) {
    const std::size_t m = mu.size(), n = nu.size(), d = mu.dim();
    if (nu.dim() != d || plan.size() != m * n) return false;
    std::vector<double> col(n, 0.0), bar(d);
    for (std::size_t i = 0; i < m; ++i) {
        double row = 0.0;
        std::fill(bar.begin(), bar.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double v = plan[i * n + j];
            if (v < -tol) return false;
            row += v;
            col[j] += v;
            for (std::size_t c = 0; c < d; ++c) bar[c] += v * nu.point(j)[c];
        }
        if (std::abs(row - mu.weight(i)) > tol) return false;
        for (std::size_t c = 0; c < d; ++c)
            if (std::abs(bar[c] - mu.weight(i) * mu.point(i)[c]) > tol * (1.0 + std::abs(mu.point(i)[c]))) return false;
    }
    for (std::size_t j = 0; j < n; ++j)
        if (std::abs(col[j] - nu.weight(j)) > tol) return false;
    return true;
}

inline OrderCheckResult convex_order_check(const DiscreteDistribution& mu, const DiscreteDistribution& nu,
                                           const LpOptions& opt = {}) {
    if (mu.dim() != nu.dim()) throw DimensionMismatch("distributions differ in dimension");
    const std::size_t n = mu.size(), m = nu.size(), d = mu.dim();
    const LinearProgram lp = build_martingale_coupling_lp(mu, nu);
    const LpSolution sol = solve(lp, opt);
    OrderCheckResult res;
    res.lp_iterations = sol.iterations;
    if (sol.status == LpStatus::Optimal) {
        res.status = OrderStatus::Dominated;
        res.coupling = sol.x;
        return res;
    }
    if (sol.status != LpStatus::Infeasible) throw Error(std::string("coupling LP ended with status ") + to_string(sol.status));

    // Farkas vector (u, v, w): u_i + v_j + w_i.(y_j - x_i) <= 0 and mu.u + nu.v > 0.
    // psi(y) = max_i (u_i + w_i.(y - x_i)) then has E_nu psi < E_mu psi.
    std::vector<MaxAffine::Piece> pieces;
    for (std::size_t i = 0; i < n; ++i) {
        Point w(d);
        for (std::size_t c = 0; c < d; ++c) w[c] = sol.farkas[n + m + i * d + c];
        pieces.push_back({sol.farkas[i], std::move(w), mu.point(i)});
    }
    MaxAffine psi(std::move(pieces));
    const double emu = mu.expectation(psi), enu = nu.expectation(psi);
    double scale = 0.0;
    for (const auto& p : mu.points()) scale = std::max(scale, std::abs(psi(p)));
    for (const auto& p : nu.points()) scale = std::max(scale, std::abs(psi(p)));
    res.witness_gap = emu - enu;
    if (res.witness_gap > 1e-12 * (1.0 + scale)) {
        res.status = OrderStatus::NotDominated;
        res.witness = std::move(psi);
    } else {
        res.status = OrderStatus::NotDominatedNoWitness;
    }
    return res;
}

// Equal-weight quantile averages; coinciding atoms are merged.
inline DiscreteDistribution baker_grid(const AnalyticLaw1D& law, std::size_t n, const QuadratureOptions& q = {}) {
    if (n == 0) throw DomainError("Baker grid needs N >= 1");
    const double dn = static_cast<double>(n);
    std::vector<double> atoms(n);
    if (law.is_atomic()) {
        // Piecewise constant quantile: integrate exactly over cumulative-weight breakpoints.
        const auto at = law.atoms();
        std::vector<double> cum(at.size());
        double c = 0.0;
        for (std::size_t k = 0; k < at.size(); ++k) cum[k] = (c += at[k].second);
        cum.back() = 1.0;
        // Overlap of [lo, hi] with each atom's cumulative-weight interval.
        for (std::size_t i = 0; i < n; ++i) {
            const double lo = static_cast<double>(i) / dn, hi = static_cast<double>(i + 1) / dn;
            double s = 0.0, prev = 0.0;
            for (std::size_t k = 0; k < at.size(); ++k) {
                const double len = std::min(hi, cum[k]) - std::max(lo, prev);
                if (len > 0.0) s += len * at[k].first;
                prev = cum[k];
            }
            atoms[i] = dn * s;
        }
    } else if (n == 1) {
        atoms[0] = law.mean();
    } else {
        auto qf = [&](double u) {
            constexpr double tiny = std::numeric_limits<double>::min();
            u = std::clamp(u, tiny, std::nextafter(1.0, 0.0));
            return law.quantile(u);
        };
        for (std::size_t i = 0; i < n; ++i) {
            const double lo = static_cast<double>(i) / dn, hi = static_cast<double>(i + 1) / dn;
            // End cells may carry a singular quantile (unbounded, or infinite slope).
            const bool end_cell = i == 0 || i + 1 == n;
            double v = 0.0;
            if (end_cell) {
                v = integrate_singular(qf, lo, hi, q);
            } else {
                v = integrate(qf, lo, hi, q);
            }
            atoms[i] = dn * v;
        }
    }
    std::vector<double> xs, ws;
    for (double a : atoms) {
        if (!xs.empty() && a == xs.back())
            ws.back() += 1.0 / dn;
        else {
            xs.push_back(a);
            ws.push_back(1.0 / dn);
        }
    }
    return DiscreteDistribution::from_1d(xs, ws, 1e-12);
}

struct BakerChainReport {
    bool divisible = true;
    std::vector<OrderStatus> steps;
    bool all_dominated() const {
        return std::all_of(steps.begin(), steps.end(), [](OrderStatus s) { return s == OrderStatus::Dominated; });
    }
};

inline BakerChainReport baker_chain_report(const std::vector<AnalyticLaw1D>& laws, const std::vector<std::size_t>& sizes,
                                           bool reject_non_divisible = true) {
    if (laws.size() != sizes.size()) throw DimensionMismatch("one grid size per law is required");
    BakerChainReport rep;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k)
        if (sizes[k] == 0 || sizes[k + 1] % sizes[k] != 0) rep.divisible = false;
    if (!rep.divisible && reject_non_divisible)
        throw DivisibilityError("Baker chain needs each grid size to divide the next");
    std::vector<DiscreteDistribution> grids;
    for (std::size_t k = 0; k < laws.size(); ++k) grids.push_back(baker_grid(laws[k], sizes[k]));
    for (std::size_t k = 0; k + 1 < grids.size(); ++k) rep.steps.push_back(convex_order_check(grids[k], grids[k + 1]).status);
    return rep;
}

inline bool baker_chain_check(const std::vector<AnalyticLaw1D>& laws, const std::vector<std::size_t>& sizes,
                              bool reject_non_divisible = true) {
    return baker_chain_report(laws, sizes, reject_non_divisible).all_dominated();
}

// W2 between 1D discrete laws via the quantile coupling.
inline double wasserstein2_1d(const DiscreteDistribution& mu, const DiscreteDistribution& nu) {
    auto sorted = [](const DiscreteDistribution& p) {
        auto x = p.values_1d();
        std::vector<std::pair<double, double>> a;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (p.weight(i) > 0.0) a.emplace_back(x[i], p.weight(i));
        std::sort(a.begin(), a.end());
        return a;
    };
    const auto a = sorted(mu), b = sorted(nu);
    std::size_t i = 0, j = 0;
    double ca = a[0].second, cb = b[0].second, pos = 0.0, s = 0.0;
    while (i < a.size() && j < b.size()) {
        const double next = std::min(ca, cb);
        const double diff = a[i].first - b[j].first;
        if (next > pos) s += (next - pos) * diff * diff;
        pos = next;
        if (ca <= next) {
            if (++i < a.size()) ca += a[i].second;
        }
        if (cb <= next) {
            if (++j < b.size()) cb += b[j].second;
        }
    }
    return std::sqrt(std::max(s, 0.0));
}

namespace counterexample {

// Three-point laws above the 2x density on [0,1]:
// nu_u = u/3 d_0 + (1 + sqrt u)/3 d_{sqrt u} + (2 - sqrt u - u)/3 d_1.
inline double second_moment(double u) { return (2.0 + std::pow(u, 1.5) - std::sqrt(u)) / 3.0; }

inline double w2_squared(double u) {
    const double r = std::sqrt(u);
    return -1.0 / 6.0 + (std::pow(u, 1.5) - r) / 3.0 +
           4.0 * ((1.0 - r) * std::pow(1.0 + r + u, 1.5) + u * u) / std::pow(3.0, 2.5);
}

inline DiscreteDistribution nu(double u) {
    const double r = std::sqrt(u);
    std::vector<double> x{0.0, r, 1.0}, w{u / 3.0, (1.0 + r) / 3.0, (2.0 - r - u) / 3.0};
    std::vector<double> xs, ws;
    for (std::size_t k = 0; k < 3; ++k) {
        if (w[k] <= 0.0) continue;
        if (!xs.empty() && xs.back() == x[k])
            ws.back() += w[k];
        else {
            xs.push_back(x[k]);
            ws.push_back(w[k]);
        }
    }
    return DiscreteDistribution::from_1d(xs, ws, 1e-12);
}

}  // namespace counterexample

struct CounterexampleReport {
    double u_star_moment = 0.0;
    double min_moment = 0.0;
    double u_star_w2 = 0.0;
    double min_w2_squared = 0.0;
    double derivative_at_third = 0.0;
    bool derivative_positive() const { return derivative_at_third > 0.0; }
};

// Lattice search over u in [0,1] for the two minimizers, plus a central difference at u = 1/3.
inline CounterexampleReport counterexample_2_2(double resolution = 1e-4) {
    if (!(resolution > 0.0 && resolution <= 0.5)) throw DomainError("resolution must lie in (0, 1/2]");
    CounterexampleReport r;
    r.min_moment = r.min_w2_squared = std::numeric_limits<double>::infinity();
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / resolution));
    for (std::size_t k = 0; k <= steps; ++k) {
        const double u = std::min(1.0, static_cast<double>(k) * resolution);
        const double m = counterexample::second_moment(u), w = counterexample::w2_squared(u);
        if (m < r.min_moment) {
            r.min_moment = m;
            r.u_star_moment = u;
        }
        if (w < r.min_w2_squared) {
            r.min_w2_squared = w;
            r.u_star_w2 = u;
        }
    }
    const double h = 1e-6, t = 1.0 / 3.0;
    r.derivative_at_third = (counterexample::w2_squared(t + h) - counterexample::w2_squared(t - h)) / (2.0 * h);
    return r;
}

}  // namespace martquant
