#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "martquant/dual.hpp"
#include "martquant/errors.hpp"
#include "martquant/laws.hpp"
#include "martquant/noise.hpp"
#include "martquant/order.hpp"
#include "martquant/primal.hpp"
#include "martquant/rng.hpp"

namespace martquant {

// Row-stochastic matrix between two grids; row i is the law of the next state given source point i.
struct MartingaleKernel {
    std::vector<Point> source, target;
    std::vector<double> pi;

    MartingaleKernel() = default;
    MartingaleKernel(std::vector<Point> src, std::vector<Point> tgt)
        : source(std::move(src)), target(std::move(tgt)), pi(source.size() * target.size(), 0.0) {}

    std::size_t rows() const { return source.size(); }
    std::size_t cols() const { return target.size(); }
    double& at(std::size_t i, std::size_t j) { return pi[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return pi[i * cols() + j]; }

    double row_sum_residual() const {
        double r = 0.0;
        for (std::size_t i = 0; i < rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols(); ++j) s += at(i, j);
            r = std::max(r, std::abs(s - 1.0));
        }
        return r;
    }

    // max_i |sum_j pi_ij y_j - x_i|, coordinatewise
    double martingale_residual() const {
        double r = 0.0;
        const std::size_t d = source.empty() ? 0 : source.front().size();
        for (std::size_t i = 0; i < rows(); ++i)
            for (std::size_t c = 0; c < d; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < cols(); ++j) s += at(i, j) * target[j][c];
                r = std::max(r, std::abs(s - source[i][c]));
            }
        return r;
    }

    double min_entry() const { return pi.empty() ? 0.0 : *std::min_element(pi.begin(), pi.end()); }

    std::vector<double> propagate(const std::vector<double>& p) const {
        if (p.size() != rows()) throw DimensionMismatch("weight vector does not match kernel rows");
        std::vector<double> out(cols(), 0.0);
        for (std::size_t i = 0; i < rows(); ++i) {
            if (p[i] == 0.0) continue;
            for (std::size_t j = 0; j < cols(); ++j) out[j] += p[i] * at(i, j);
        }
        return out;
    }
};

// Conditional law of x + theta Zb for Zb with a truncated law: F(u) and K(u) = E[X 1{X <= u}].
inline double transition_cdf(double x, double u, double theta, const TruncatedLaw1D& trunc) {
    if (!(theta > 0.0)) throw DomainError("closed-form transition needs theta > 0");
    return AffineLaw<TruncatedLaw1D>(trunc, x, theta).cdf(u);
}

inline double transition_partial_moment(double x, double u, double theta, const TruncatedLaw1D& trunc) {
    if (!(theta > 0.0)) throw DomainError("closed-form transition needs theta > 0");
    return AffineLaw<TruncatedLaw1D>(trunc, x, theta).partial_moment(u);
}

namespace detail {

inline double hull_scale(const DualGrid1D& g) { return std::max({1.0, std::abs(g[0]), std::abs(g[g.size() - 1])}); }

inline std::vector<Point> as_points(const std::vector<double>& x) {
    std::vector<Point> out;
    out.reserve(x.size());
    for (double v : x) out.push_back(Point{v});
    return out;
}

inline std::vector<double> as_values(const std::vector<Point>& x) {
    std::vector<double> out;
    out.reserve(x.size());
    for (const auto& p : x) {
        if (p.size() != 1) throw DimensionMismatch("expected one-dimensional points");
        out.push_back(p[0]);
    }
    return out;
}

// Distance from q to the polygon boundary (0 when inside is not decided here).
inline double distance_to_polygon(const std::vector<Vec2>& poly, const Vec2& q) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < poly.size(); ++k) {
        const Vec2& a = poly[k];
        const Vec2& b = poly[(k + 1) % poly.size()];
        const double ex = b[0] - a[0], ey = b[1] - a[1];
        const double len2 = ex * ex + ey * ey;
        double t = len2 > 0.0 ? ((q[0] - a[0]) * ex + (q[1] - a[1]) * ey) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double dx = a[0] + t * ex - q[0], dy = a[1] + t * ey - q[1];
        best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
    return best;
}

}  // namespace detail

// Closed-form 1D rows: hat weights of the law of x_i + theta_i Zb on the target grid.
inline MartingaleKernel dual_transition_weights(const std::vector<double>& source, const std::vector<double>& theta,
                                                const DualGrid1D& target, const TruncatedLaw1D& trunc,
                                                double hull_tol = 1e-12) {
    if (source.size() != theta.size()) throw DimensionMismatch("one theta value per source point is required");
    MartingaleKernel ker(detail::as_points(source), detail::as_points(target.points()));
    const Interval zs = trunc.support();
    const double lo = target[0], hi = target[target.size() - 1];
    const double slack = hull_tol * detail::hull_scale(target);
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (!(theta[i] > 0.0)) throw DomainError("closed-form transition needs theta > 0");
        const double a = source[i] + theta[i] * zs.lo, b = source[i] + theta[i] * zs.hi;
        const double excess = std::max(lo - a, b - hi);
        if (excess > slack)
            throw HullViolation(i, excess,
                                "image of source point " + std::to_string(i) + " leaves the target hull by " +
                                    std::to_string(excess));
        const auto w = dual_weights(target, AffineLaw<TruncatedLaw1D>(trunc, source[i], theta[i]), 1e-12);
        std::copy(w.begin(), w.end(), ker.pi.begin() + static_cast<std::ptrdiff_t>(i * target.size()));
    }
    return ker;
}

inline MartingaleKernel dual_transition_weights(const std::vector<double>& source, const Theta& theta,
                                                const DualGrid1D& target, const TruncatedLaw1D& trunc,
                                                double hull_tol = 1e-12) {
    std::vector<double> th(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) th[i] = theta.scalar_value(source[i]);
    return dual_transition_weights(source, th, target, trunc, hull_tol);
}

namespace detail {

inline void check_centered(const DiscreteDistribution& noise) {
    for (double m : noise.mean())
        if (std::abs(m) > 1e-10) throw DomainError("finite noise must be centered");
}

inline Point image(const Point& x, const Theta& theta, const Point& z) {
    const std::size_t d = theta.dim(), q = theta.noise_dim();
    const auto m = theta.eval(x);
    Point y = x;
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < q; ++c) y[r] += m[r * q + c] * z[c];
    return y;
}

}  // namespace detail

// Row i = sum_j q_j * split(x_i + theta(x_i) z_j) on a 1D dual grid.
inline MartingaleKernel finite_noise_transition(const std::vector<Point>& source, const DiscreteDistribution& noise,
                                                const Theta& theta, const DualGrid1D& target, double hull_tol = 1e-12) {
    if (theta.dim() != 1 || noise.dim() != theta.noise_dim()) throw DimensionMismatch("theta does not match the noise");
    detail::check_centered(noise);
    MartingaleKernel ker(source, detail::as_points(target.points()));
    const double lo = target[0], hi = target[target.size() - 1];
    const double slack = hull_tol * detail::hull_scale(target);
    for (std::size_t i = 0; i < source.size(); ++i) {
        for (std::size_t j = 0; j < noise.size(); ++j) {
            if (noise.weight(j) == 0.0) continue;
            const double y = detail::image(source[i], theta, noise.point(j))[0];
            const double excess = std::max(lo - y, y - hi);
            if (excess > slack)
                throw HullViolation(i, excess,
                                    "image of source point " + std::to_string(i) + " leaves the target hull by " +
                                        std::to_string(excess));
            const auto s = split(target, std::clamp(y, lo, hi), 0.0);
            for (std::size_t v = 0; v < s.vertices.size(); ++v) ker.at(i, s.vertices[v]) += noise.weight(j) * s.weights[v];
        }
    }
    return ker;
}

// Same on a 2D Delaunay target.
inline MartingaleKernel finite_noise_transition(const std::vector<Point>& source, const DiscreteDistribution& noise,
                                                const Theta& theta, const Triangulation2D& target, double hull_tol = 1e-9) {
    if (theta.dim() != 2 || noise.dim() != theta.noise_dim()) throw DimensionMismatch("theta does not match the noise");
    detail::check_centered(noise);
    std::vector<Point> tgt;
    for (const auto& v : target.vertices()) tgt.push_back(Point{v[0], v[1]});
    MartingaleKernel ker(source, tgt);
    for (std::size_t i = 0; i < source.size(); ++i) {
        for (std::size_t j = 0; j < noise.size(); ++j) {
            if (noise.weight(j) == 0.0) continue;
            const Point y = detail::image(source[i], theta, noise.point(j));
            BarycentricSplit s;
            try {
                s = split(target, y, hull_tol);
            } catch (const OutOfHullError&) {
                const double excess = detail::distance_to_polygon(target.hull(), Vec2{y[0], y[1]});
                throw HullViolation(i, excess,
                                    "image of source point " + std::to_string(i) + " leaves the target hull by " +
                                        std::to_string(excess));
            }
            for (std::size_t v = 0; v < s.vertices.size(); ++v) ker.at(i, s.vertices[v]) += noise.weight(j) * s.weights[v];
        }
    }
    return ker;
}

enum class GridMode { FixedGrids, EmbeddedOptimization };

struct ChainOptions {
    GridMode mode = GridMode::EmbeddedOptimization;
    std::vector<std::vector<Point>> fixed_grids;  // targets for steps 1..n
    std::optional<std::vector<double>> x0_grid;   // user grid for the 1D initial law
    LloydOptions primal;
    DualLloydOptions dual;
    std::size_t mixture_cap = 512;
    std::size_t fallback_noise_points = 7;
    bool force_finite_noise = false;
    bool check_order = true;
    double hull_tol = 1e-12;
};

struct StepDiagnostics {
    std::string transition;  // "closed_form" or "finite_noise"
    std::string noise;
    double dual_distortion = 0.0;  // ||Xhat_{k+1} - Xtilde_{k+1}||_2
    double martingale_residual = 0.0;
    double row_sum_residual = 0.0;
    double hull_margin = 0.0;  // min distance from the image hull to the target hull boundary (>= 0 inside)
    bool widened = false;
    bool fallback = false;
    std::size_t lloyd_iterations = 0;
    bool lloyd_converged = true;
    std::optional<OrderStatus> order;        // Xhat_k vs Xhat_{k+1}
    std::optional<OrderStatus> tilde_lower;  // Xhat_k vs Xtilde_{k+1}
    std::optional<OrderStatus> tilde_upper;  // Xtilde_{k+1} vs Xhat_{k+1}
};

struct ChainApproximation {
    std::size_t dim = 1;
    std::vector<std::vector<Point>> grids;
    std::vector<std::vector<double>> weights;
    std::vector<MartingaleKernel> kernels;
    std::vector<StepDiagnostics> steps;
    std::vector<StepNoise> effective_noise;  // noise actually used per step
    std::vector<bool> finite_noise_step;
    double x0_distortion = 0.0;

    std::size_t n() const { return kernels.size(); }

    DiscreteDistribution marginal(std::size_t k) const {
        std::vector<double> w = weights[k];
        double s = 0.0;
        for (double& v : w) {
            v = std::max(v, 0.0);
            s += v;
        }
        for (double& v : w) v /= s;
        return DiscreteDistribution(grids[k], std::move(w), 1e-9);
    }

    Point mean(std::size_t k) const { return marginal(k).mean(); }
};

using X0Input = std::variant<AnalyticLaw1D, DiscreteDistribution>;

namespace detail {

// Closed-form noise if the step admits one: a centered truncation with bounded support.
inline std::optional<TruncatedLaw1D> closed_form_noise(const StepNoise& nz) {
    if (nz.dim() != 1) return std::nullopt;
    switch (nz.mode()) {
        case StepNoise::Mode::Truncated: return nz.truncation();
        case StepNoise::Mode::Ball: return TruncatedLaw1D::symmetric(nz.base(), nz.radius());
        case StepNoise::Mode::Exact: {
            const Interval s = nz.base().support();
            if (!s.bounded() || !(s.lo < 0.0 && s.hi > 0.0)) return std::nullopt;
            return TruncatedLaw1D(nz.base(), s.lo, s.hi);
        }
        case StepNoise::Mode::Quantized: return std::nullopt;
    }
    return std::nullopt;
}

inline DualGrid1D stretch(const DualGrid1D& g, double lo, double hi) {
    const double a = g[0], b = g[g.size() - 1];
    std::vector<double> x(g.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = lo + (g[i] - a) * (hi - lo) / (b - a);
    x.front() = lo;
    x.back() = hi;
    return DualGrid1D(std::move(x));
}

inline DualGrid1D equally_spaced(double lo, double hi, std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    x.back() = hi;
    return DualGrid1D(std::move(x));
}

inline std::vector<double> normalized(std::vector<double> w) {
    double s = 0.0;
    for (double& v : w) {
        v = std::max(v, 0.0);
        s += v;
    }
    for (double& v : w) v /= s;
    return w;
}

}  // namespace detail

inline ChainApproximation build_chain(const ArchSpec& arch, const std::vector<StepNoise>& noise, const X0Input& x0,
                                      const std::vector<std::size_t>& sizes, const ChainOptions& opt = {}) {
    arch.validate();
    const std::size_t n = arch.steps();
    if (arch.d >= 3) throw OutOfScopeError("unsupported dimension: chains are built for d = 1 or 2");
    if (noise.size() != n && noise.size() != 1) throw DimensionMismatch("one noise spec per step (or a single one) is required");
    if (sizes.size() != n + 1) throw DimensionMismatch("grid sizes N_0..N_n are required");
    for (const auto& nz : noise)
        if (nz.dim() != arch.q) throw DimensionMismatch("noise dimension does not match theta");
    if (opt.mode == GridMode::FixedGrids && opt.fixed_grids.size() != n)
        throw DimensionMismatch("fixed-grid mode needs one target grid per step");
    if (opt.mode == GridMode::EmbeddedOptimization && arch.d != 1)
        throw OutOfScopeError("embedded grid optimization is one-dimensional only; supply fixed grids");

    ChainApproximation ch;
    ch.dim = arch.d;

    // Initial grid.
    if (const auto* law = std::get_if<AnalyticLaw1D>(&x0)) {
        if (arch.d != 1) throw DimensionMismatch("a one-dimensional initial law needs d = 1");
        std::vector<double> g, w;
        if (opt.x0_grid) {
            Grid1D gr(*opt.x0_grid);
            g = gr.points();
            w = voronoi_weights(gr, *law);
            ch.x0_distortion = quadratic_distortion(gr, *law);
        } else if (law->is_atomic() && law->atoms().size() <= sizes[0]) {
            for (auto [p, q] : law->atoms()) {
                g.push_back(p);
                w.push_back(q);
            }
        } else {
            auto vq = lloyd_1d(*law, sizes[0], std::nullopt, opt.primal);
            g = vq.grid.points();
            w = vq.weights;
            ch.x0_distortion = vq.distortion;
        }
        ch.grids.push_back(detail::as_points(g));
        ch.weights.push_back(detail::normalized(w));
    } else {
        const auto& dd = std::get<DiscreteDistribution>(x0);
        if (dd.dim() != arch.d) throw DimensionMismatch("initial distribution has the wrong dimension");
        ch.grids.push_back(dd.points());
        ch.weights.push_back(dd.weights());
    }

    for (std::size_t k = 0; k < n; ++k) {
        const StepNoise& nz = noise.size() == 1 ? noise.front() : noise[k];
        const Theta& th = arch.theta[k];
        const auto& src = ch.grids[k];
        const auto& p = ch.weights[k];
        StepDiagnostics diag;
        diag.noise = nz.describe();

        std::optional<TruncatedLaw1D> trunc = opt.force_finite_noise ? std::nullopt : detail::closed_form_noise(nz);
        std::vector<double> theta_vals;
        if (arch.d == 1 && trunc) {
            for (const auto& x : src) theta_vals.push_back(th.scalar_value(x[0]));
            if (std::any_of(theta_vals.begin(), theta_vals.end(), [](double t) { return !(t > 0.0); })) {
                trunc.reset();
                diag.fallback = true;
            }
        }
        if (arch.d == 1 && !trunc && nz.mode() != StepNoise::Mode::Quantized && !opt.force_finite_noise) diag.fallback = true;

        MartingaleKernel ker;
        if (trunc) {
            diag.transition = "closed_form";
            ch.effective_noise.push_back(nz);
            ch.finite_noise_step.push_back(false);
            const auto xs = detail::as_values(src);
            const Interval zs = trunc->support();
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            double wlo = lo, whi = hi;  // hull of the positively weighted components
            std::vector<AffineLaw<TruncatedLaw1D>> comps;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double a = xs[i] + theta_vals[i] * zs.lo, b = xs[i] + theta_vals[i] * zs.hi;
                lo = std::min(lo, a);
                hi = std::max(hi, b);
                if (p[i] > 0.0) {
                    wlo = std::min(wlo, a);
                    whi = std::max(whi, b);
                }
                comps.emplace_back(*trunc, xs[i], theta_vals[i]);
            }
            MixtureLaw<AffineLaw<TruncatedLaw1D>> mix(comps, detail::normalized(p));
            DualGrid1D target;
            if (opt.mode == GridMode::FixedGrids) {
                target = DualGrid1D(detail::as_values(opt.fixed_grids[k]));
            } else {
                const std::size_t m = sizes[k + 1];
                if (m > opt.mixture_cap)
                    throw BudgetExceeded("grid size " + std::to_string(m) + " exceeds the mixture cap " +
                                         std::to_string(opt.mixture_cap));
                auto dq = dual_lloyd_1d(mix, m, std::nullopt, opt.dual);
                diag.lloyd_iterations = dq.iterations;
                diag.lloyd_converged = dq.converged;
                target = dq.grid;
                if (lo < wlo || hi > whi) target = detail::stretch(target, std::min(lo, target[0]), std::max(hi, target[m - 1]));
            }
            try {
                ker = dual_transition_weights(xs, theta_vals, target, *trunc, opt.hull_tol);
            } catch (const HullViolation& e) {
                // One retry for round-off sized violations; anything larger is reported.
                const double w = target[target.size() - 1] - target[0];
                if (e.excess() > 1e-9 * w) throw;
                target = detail::stretch(target, std::min(lo, target[0]) - 1e-9 * w, std::max(hi, target[target.size() - 1]) + 1e-9 * w);
                diag.widened = true;
                ker = dual_transition_weights(xs, theta_vals, target, *trunc, opt.hull_tol);
            }
            diag.dual_distortion = dual_distortion(target, mix, 1e-12);
            diag.hull_margin = std::min(lo - target[0], target[target.size() - 1] - hi);
        } else {
            diag.transition = "finite_noise";
            StepNoise eff = [&] {
                if (nz.mode() == StepNoise::Mode::Quantized) return nz;
                // Atomic base laws are already finite: their atoms form the grid.
                if (nz.mode() == StepNoise::Mode::Exact && nz.base().is_atomic() &&
                    nz.base().atoms().size() <= opt.fallback_noise_points) {
                    std::vector<double> a;
                    for (auto [x, w] : nz.base().atoms()) a.push_back(x);
                    return StepNoise::quantized_grid(nz.base(), Grid1D(a), nz.dim());
                }
                return StepNoise::quantized(nz.base(), opt.fallback_noise_points, nz.dim(), opt.primal);
            }();
            ch.effective_noise.push_back(eff);
            ch.finite_noise_step.push_back(true);
            const DiscreteDistribution zl = eff.finite_law();
            // Images and the intermediate law Xtilde_{k+1}.
            std::vector<Point> images;
            std::vector<double> iw;
            for (std::size_t i = 0; i < src.size(); ++i)
                for (std::size_t j = 0; j < zl.size(); ++j) {
                    images.push_back(detail::image(src[i], th, zl.point(j)));
                    iw.push_back(p[i] * zl.weight(j));
                }
            std::vector<std::size_t> where(images.size());  // image -> merged atom of Xtilde
            DiscreteDistribution tilde = [&] {
                std::vector<std::size_t> idx(images.size());
                for (std::size_t t = 0; t < idx.size(); ++t) idx[t] = t;
                std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return images[a] < images[b]; });
                std::vector<Point> pts;
                std::vector<double> ws;
                for (auto t : idx) {
                    if (pts.empty() || pts.back() != images[t]) {
                        pts.push_back(images[t]);
                        ws.push_back(0.0);
                    }
                    ws.back() += iw[t];
                    where[t] = pts.size() - 1;
                }
                return DiscreteDistribution(std::move(pts), detail::normalized(ws), 1e-9);
            }();

            double dist = 0.0;  // E|Xhat - Xtilde|^2 under the randomized split
            std::vector<double> upper_plan;  // Xtilde -> Xhat_{k+1} through the split
            if (arch.d == 1) {
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (const auto& y : images) {
                    lo = std::min(lo, y[0]);
                    hi = std::max(hi, y[0]);
                }
                DualGrid1D target;
                if (opt.mode == GridMode::FixedGrids) {
                    target = DualGrid1D(detail::as_values(opt.fixed_grids[k]));
                } else {
                    const std::size_t m = sizes[k + 1];
                    if (m < 2) throw DomainError("dual grids need at least two points");
                    if (!(lo < hi)) throw DomainError("degenerate one-step image: all images coincide");
                    if (tilde.size() <= m) {
                        auto v = tilde.values_1d();
                        if (v.size() < 2) v = {lo, hi};
                        target = DualGrid1D(v);
                    } else {
                        try {
                            auto dq = dual_lloyd_1d(tilde.to_law(), m, std::nullopt, opt.dual);
                            diag.lloyd_iterations = dq.iterations;
                            diag.lloyd_converged = dq.converged;
                            target = dq.grid;
                        } catch (const Error&) {
                            target = detail::equally_spaced(lo, hi, m);
                            diag.lloyd_converged = false;
                        }
                    }
                }
                try {
                    ker = finite_noise_transition(src, zl, th, target, opt.hull_tol);
                } catch (const HullViolation& e) {
                    // One retry for round-off sized violations; anything larger is reported.
                    const double w = target[target.size() - 1] - target[0];
                    if (e.excess() > 1e-9 * w) throw;
                    target = detail::stretch(target, std::min(lo, target[0]) - 1e-9 * w, std::max(hi, target[target.size() - 1]) + 1e-9 * w);
                    diag.widened = true;
                    ker = finite_noise_transition(src, zl, th, target, opt.hull_tol);
                }
                diag.hull_margin = std::min(lo - target[0], target[target.size() - 1] - hi);
                for (std::size_t t = 0; t < images.size(); ++t) {
                    if (iw[t] == 0.0) continue;
                    const double y = std::clamp(images[t][0], target[0], target[target.size() - 1]);
                    const auto sp = split(target, y, 0.0);
                    for (std::size_t v = 0; v < sp.vertices.size(); ++v) {
                        const double dy = target[sp.vertices[v]] - images[t][0];
                        dist += iw[t] * sp.weights[v] * dy * dy;
                    }
                }
                upper_plan.assign(tilde.size() * target.size(), 0.0);
                for (std::size_t l = 0; l < tilde.size(); ++l) {
                    const auto sp = split(target, std::clamp(tilde.point(l)[0], target[0], target[target.size() - 1]), 0.0);
                    for (std::size_t v = 0; v < sp.vertices.size(); ++v)
                        upper_plan[l * target.size() + sp.vertices[v]] += tilde.weight(l) * sp.weights[v];
                }
            } else {
                auto pts2 = opt.fixed_grids[k];
                std::vector<Vec2> v2;
                for (const auto& q : pts2) {
                    if (q.size() != 2) throw DimensionMismatch("two-dimensional target grid expected");
                    v2.push_back({q[0], q[1]});
                }
                Triangulation2D tri(v2);
                ker = finite_noise_transition(src, zl, th, tri);
                double margin = std::numeric_limits<double>::infinity();
                for (const auto& y : images) margin = std::min(margin, detail::distance_to_polygon(tri.hull(), {y[0], y[1]}));
                diag.hull_margin = margin;
                for (std::size_t t = 0; t < images.size(); ++t) {
                    if (iw[t] == 0.0) continue;
                    const auto sp = split(tri, images[t], 1e-9);
                    for (std::size_t v = 0; v < sp.vertices.size(); ++v)
                        dist += iw[t] * sp.weights[v] * squared_distance(pts2[sp.vertices[v]], images[t]);
                }
                upper_plan.assign(tilde.size() * pts2.size(), 0.0);
                for (std::size_t l = 0; l < tilde.size(); ++l) {
                    const auto sp = split(tri, tilde.point(l), 1e-9);
                    for (std::size_t v = 0; v < sp.vertices.size(); ++v)
                        upper_plan[l * pts2.size() + sp.vertices[v]] += tilde.weight(l) * sp.weights[v];
                }
            }
            diag.dual_distortion = std::sqrt(dist);
            ch.kernels.push_back(ker);
            ch.weights.push_back(ker.propagate(p));
            ch.grids.push_back(ker.target);
            if (opt.check_order) {
                // Both couplings are explicit; the LP only runs if a plan fails verification.
                const auto lower = ch.marginal(k);
                std::vector<double> lower_plan(lower.size() * tilde.size(), 0.0);
                const double total = std::accumulate(iw.begin(), iw.end(), 0.0);
                for (std::size_t t = 0; t < images.size(); ++t)
                    lower_plan[(t / zl.size()) * tilde.size() + where[t]] += iw[t] / total;
                diag.tilde_lower = is_martingale_coupling(lower, tilde, lower_plan)
                                       ? OrderStatus::Dominated
                                       : convex_order_check(lower, tilde).status;
                const auto upper = ch.marginal(k + 1);
                diag.tilde_upper = is_martingale_coupling(tilde, upper, upper_plan)
                                       ? OrderStatus::Dominated
                                       : convex_order_check(tilde, upper).status;
            }
            diag.martingale_residual = ker.martingale_residual();
            diag.row_sum_residual = ker.row_sum_residual();
            if (opt.check_order) diag.order = convex_order_check(ch.marginal(k), ch.marginal(k + 1)).status;
            ch.steps.push_back(diag);
            continue;
        }
        ch.kernels.push_back(ker);
        ch.weights.push_back(ker.propagate(p));
        ch.grids.push_back(ker.target);
        diag.martingale_residual = ker.martingale_residual();
        diag.row_sum_residual = ker.row_sum_residual();
        if (opt.check_order) diag.order = convex_order_check(ch.marginal(k), ch.marginal(k + 1)).status;
        ch.steps.push_back(diag);
    }
    return ch;
}

// Empirical marginal frequencies of the simulated chain: X0 drawn and projected on the
// initial Voronoi grid, then x + theta(x) Zb followed by the randomized dual split.
struct ChainMonteCarlo {
    std::size_t paths = 0;
    std::vector<std::vector<double>> frequency;

    double standard_error(std::size_t k, std::size_t j) const {
        const double f = frequency[k][j];
        return std::sqrt(std::max(f * (1.0 - f), 0.0) / static_cast<double>(paths));
    }
};

inline ChainMonteCarlo simulate_chain(const ChainApproximation& ch, const ArchSpec& arch, const AnalyticLaw1D& x0,
                                      std::size_t paths, std::uint64_t seed) {
    if (ch.dim != 1) throw OutOfScopeError("chain simulation is one-dimensional");
    const std::size_t n = ch.n();
    std::vector<Grid1D> vor{Grid1D(detail::as_values(ch.grids[0]))};
    std::vector<DualGrid1D> targets;
    for (std::size_t k = 1; k <= n; ++k) targets.emplace_back(detail::as_values(ch.grids[k]));
    std::vector<std::vector<std::uint64_t>> counts(n + 1);
    for (std::size_t k = 0; k <= n; ++k) counts[k].assign(ch.grids[k].size(), 0);
    std::vector<double> z(arch.q), zb(arch.q);
    for (std::size_t path = 0; path < paths; ++path) {
        CounterRng rng(seed, path);
        std::size_t idx = nn_project(vor[0], x0.draw(rng));
        ++counts[0][idx];
        double x = ch.grids[0][idx][0];
        for (std::size_t k = 0; k < n; ++k) {
            const StepNoise& nz = ch.effective_noise[k];
            nz.draw(rng, z);
            nz.apply(z, zb);
            const auto m = arch.theta[k].eval(std::span<const double>(&x, 1));
            double y = x;
            for (std::size_t c = 0; c < arch.q; ++c) y += m[c] * zb[c];
            const auto& tg = targets[k];
            y = std::clamp(y, tg[0], tg[tg.size() - 1]);
            const auto s = split(tg, y, 0.0);
            idx = split_randomized(s, rng.uniform());
            ++counts[k + 1][idx];
            x = tg[idx];
        }
    }
    ChainMonteCarlo mc;
    mc.paths = paths;
    for (auto& c : counts) {
        std::vector<double> f(c.size());
        for (std::size_t j = 0; j < c.size(); ++j) f[j] = static_cast<double>(c[j]) / static_cast<double>(paths);
        mc.frequency.push_back(std::move(f));
    }
    return mc;
}

}  // namespace martquant
