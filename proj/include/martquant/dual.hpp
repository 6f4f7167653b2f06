#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "martquant/errors.hpp"
#include "martquant/laws.hpp"

namespace martquant {

class DualGrid1D {
public:
    DualGrid1D() = default;
    explicit DualGrid1D(std::vector<double> points) : pts_(std::move(points)) {
        if (pts_.size() < 2) throw DomainError("dual grid needs at least two points");
        for (std::size_t i = 0; i < pts_.size(); ++i) {
            if (!std::isfinite(pts_[i])) throw DomainError("dual grid points must be finite");
            if (i > 0 && !(pts_[i - 1] < pts_[i])) throw DomainError("dual grid points must be strictly increasing");
        }
    }
    std::size_t size() const { return pts_.size(); }
    double operator[](std::size_t i) const { return pts_[i]; }
    const std::vector<double>& points() const { return pts_; }
    double lo() const { return pts_.front(); }
    double hi() const { return pts_.back(); }

private:
    std::vector<double> pts_;
};

struct BarycentricSplit {
    std::size_t simplex = 0;
    std::vector<std::size_t> vertices;  // ascending
    std::vector<double> weights;
};

inline BarycentricSplit split(const DualGrid1D& grid, double xi, double tol = 1e-9) {
    const auto& x = grid.points();
    const double slack = tol * std::max({1.0, std::abs(x.front()), std::abs(x.back())});
    if (!(xi >= x.front() - slack) || !(xi <= x.back() + slack))
        throw OutOfHullError("point " + std::to_string(xi) + " lies outside the dual grid hull [" +
                             std::to_string(x.front()) + ", " + std::to_string(x.back()) + "]");
    xi = std::clamp(xi, x.front(), x.back());
    auto it = std::lower_bound(x.begin(), x.end(), xi);
    const auto j = static_cast<std::size_t>(it - x.begin());
    BarycentricSplit s;
    if (*it == xi) {
        s.simplex = j == 0 ? 0 : j - 1;
        s.vertices = {j};
        s.weights = {1.0};
        return s;
    }
    // x[j-1] < xi < x[j]
    const double lam = (x[j] - xi) / (x[j] - x[j - 1]);
    s.simplex = j - 1;
    s.vertices = {j - 1, j};
    s.weights = {lam, 1.0 - lam};
    return s;
}

// Vertex picked by the cumulative rule sum_{j<i} l_j <= u < sum_{j<=i} l_j.
inline std::size_t split_randomized(const BarycentricSplit& s, double u) {
    double cum = 0.0;
    std::size_t last_positive = s.vertices.front();
    for (std::size_t i = 0; i < s.vertices.size(); ++i) {
        if (s.weights[i] <= 0.0) continue;
        last_positive = s.vertices[i];
        cum += s.weights[i];
        if (u < cum) return s.vertices[i];
    }
    return last_positive;
}

// Hat-function weights p_i = E[lambda_i(X)] of a law supported in the hull.
template <Law1D L>
std::vector<double> dual_weights(const DualGrid1D& grid, const L& law, double support_tol = 1e-12) {
    const auto& x = grid.points();
    const std::size_t n = x.size();
    const double below = law.cdf_left(x.front());
    const double above = 1.0 - law.cdf(x.back());
    if (below > support_tol || above > support_tol)
        throw SupportError("law puts mass outside the dual grid hull (below " + std::to_string(below) +
                           ", above " + std::to_string(above) + ")");
    std::vector<double> w(n, 0.0);
    double F0 = law.cdf(x[0]);
    double K0 = law.partial_moment(x[0]);
    w[0] = F0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const bool last = i + 2 == n;
        const double F1 = last ? 1.0 : law.cdf(x[i + 1]);
        const double K1 = last ? law.mean() : law.partial_moment(x[i + 1]);
        const double dF = F1 - F0;
        const double dK = K1 - K0;
        const double h = x[i + 1] - x[i];
        w[i] += (x[i + 1] * dF - dK) / h;
        w[i + 1] += (dK - x[i] * dF) / h;
        F0 = F1;
        K0 = K1;
    }
    for (auto& v : w) v = std::max(v, 0.0);
    return w;
}

// Quadratic dual distortion d_2(grid, law) = sqrt(sum_i int (x_{i+1}-t)(t-x_i) dmu).
template <Law1D L>
double dual_distortion(const DualGrid1D& grid, const L& law, double support_tol = 1e-12) {
    const auto& x = grid.points();
    const double below = law.cdf_left(x.front());
    const double above = 1.0 - law.cdf(x.back());
    if (below > support_tol || above > support_tol)
        throw SupportError("law puts mass outside the dual grid hull");
    double total = 0.0;
    double F0 = law.cdf(x[0]), K0 = law.partial_moment(x[0]), S0 = law.partial_second_moment(x[0]);
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        const bool last = i + 2 == x.size();
        const double F1 = last ? 1.0 : law.cdf(x[i + 1]);
        const double K1 = last ? law.mean() : law.partial_moment(x[i + 1]);
        const double S1 = last ? law.second_moment() : law.partial_second_moment(x[i + 1]);
        total += std::max(0.0, (x[i] + x[i + 1]) * (K1 - K0) - x[i] * x[i + 1] * (F1 - F0) - (S1 - S0));
        F0 = F1;
        K0 = K1;
        S0 = S1;
    }
    return std::sqrt(total);
}

enum class DualLloydMethod {
    // Gauss-Seidel sweeps; each interior point solves dd^2/dx_i = 0 exactly
    // with its neighbours frozen. d^2 is convex in each coordinate, so every
    // sweep decreases the distortion.
    CoordinateDescent,
    // Simultaneous update x_i <- x_i - g_i / (F(x_{i+1}) - F(x_{i-1})).
    FixedPoint,
};

struct DualLloydOptions {
    double tol = 1e-12;
    std::size_t max_iter = 200000;
    double damping = 1.0;  // x <- (1-w) x + w T(x); w in (0,2) for coordinate descent
    DualLloydMethod method = DualLloydMethod::CoordinateDescent;
};

struct DualQuantization {
    DualGrid1D grid;
    std::vector<double> weights;
    double distortion = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    bool order_violation = false;
};

// Partial derivative of d^2 in an interior x_i:
//   g_i = K(x_{i+1}) - K(x_{i-1}) - x_{i+1}(F(x_{i+1}) - F(x_i)) - x_{i-1}(F(x_i) - F(x_{i-1}))
// The stationarity equation g_i = 0 is equivalent to
//   F(x_i) = F(x_{i-1}) + (x_{i+1} dF - dK) / (x_{i+1} - x_{i-1}),
// with dF, dK taken over (x_{i-1}, x_{i+1}].
template <Law1D L>
double dual_coordinate_solve(const L& law, double left, double right) {
    const double Fl = law.cdf(left);
    const double Fr = law.cdf(right);
    const double dF = Fr - Fl;
    if (!(dF > 0.0)) return 0.5 * (left + right);
    const double dK = law.partial_moment(right) - law.partial_moment(left);
    const double target = Fl + (right * dF - dK) / (right - left);
    double lo = left, hi = right;
    if (law.cdf(lo) >= target) return lo;
    if (law.cdf(hi) < target) return hi;
    // invariant F(lo) < target <= F(hi); secant steps guarded by bisection
    double flo = law.cdf(lo) - target, fhi = law.cdf(hi) - target;
    for (int it = 0; it < 200; ++it) {
        double mid = lo - flo * (hi - lo) / (fhi - flo);
        if (!(mid > lo && mid < hi) || it % 3 == 2) mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = law.cdf(mid) - target;
        if (fm >= 0.0) {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi))) break;
    }
    return -flo <= fhi ? lo : hi;
}

// Optimal quadratic dual quantization of a compactly supported law on
// [a,b]; the endpoints stay pinned at the hull.
template <Law1D L>
DualQuantization dual_lloyd_1d(const L& law, std::size_t n, std::optional<DualGrid1D> init = std::nullopt,
                               const DualLloydOptions& opt = {}) {
    if (n < 2) throw DomainError("dual grid size must be at least 2");
    const bool damping_ok = opt.method == DualLloydMethod::CoordinateDescent
                                ? (opt.damping > 0.0 && opt.damping < 2.0)
                                : (opt.damping > 0.0 && opt.damping <= 1.0);
    if (!damping_ok) throw DomainError("damping out of range");
    const Interval sup = law.support();
    if (!sup.bounded()) throw DomainError("dual quantization needs a compactly supported law");
    if (!(sup.lo < sup.hi)) throw DomainError("dual quantization needs a non-degenerate support hull");
    std::vector<double> x(n);
    if (init) {
        if (init->size() != n) throw DomainError("initial dual grid has the wrong size");
        x = init->points();
        if (x.front() != sup.lo || x.back() != sup.hi)
            throw DomainError("initial dual grid endpoints must match the support hull");
    } else {
        for (std::size_t i = 0; i < n; ++i)
            x[i] = sup.lo + sup.width() * static_cast<double>(i) / static_cast<double>(n - 1);
        x.back() = sup.hi;
    }
    DualQuantization out;
    std::vector<double> F(n), K(n), next(n);
    std::size_t it = 0;
    if (n == 2) out.converged = true;
    for (; n > 2 && it < opt.max_iter; ++it) {
        next = x;
        double move = 0.0;
        if (opt.method == DualLloydMethod::CoordinateDescent) {
            for (std::size_t i = 1; i + 1 < n; ++i) {
                const double t = dual_coordinate_solve(law, next[i - 1], next[i + 1]);
                next[i] = (1.0 - opt.damping) * x[i] + opt.damping * t;
                if (!(next[i - 1] < next[i] && next[i] < next[i + 1])) {
                    out.order_violation = true;
                    break;
                }
                move = std::max(move, std::abs(next[i] - x[i]));
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                F[i] = law.cdf(x[i]);
                K[i] = law.partial_moment(x[i]);
            }
            for (std::size_t i = 1; i + 1 < n; ++i) {
                const double mass = F[i + 1] - F[i - 1];
                double t = x[i];
                if (mass > 0.0) {
                    const double g = K[i + 1] - K[i - 1] - x[i + 1] * (F[i + 1] - F[i]) -
                                     x[i - 1] * (F[i] - F[i - 1]);
                    t = x[i] - g / mass;
                }
                next[i] = (1.0 - opt.damping) * x[i] + opt.damping * t;
                move = std::max(move, std::abs(next[i] - x[i]));
            }
            for (std::size_t i = 1; i < n; ++i)
                if (!(next[i - 1] < next[i])) out.order_violation = true;
        }
        if (out.order_violation) break;
        x.swap(next);
        if (move < opt.tol) {
            out.converged = true;
            ++it;
            break;
        }
    }
    out.iterations = it;
    out.grid = DualGrid1D(x);
    out.weights = dual_weights(out.grid, law);
    out.distortion = dual_distortion(out.grid, law);
    return out;
}

// ---------------------------------------------------------------------------
// 2D Delaunay triangulation and barycentric splitting.

using Vec2 = std::array<double, 2>;

namespace detail {

inline double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
}

// > 0 when d lies strictly inside the circumcircle of the CCW triangle abc.
inline double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double adx = a[0] - d[0], ady = a[1] - d[1];
    const double bdx = b[0] - d[0], bdy = b[1] - d[1];
    const double cdx = c[0] - d[0], cdy = c[1] - d[1];
    const double ad = adx * adx + ady * ady;
    const double bd = bdx * bdx + bdy * bdy;
    const double cd = cdx * cdx + cdy * cdy;
    return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

inline std::vector<Vec2> convex_hull(std::vector<Vec2> p) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    if (p.size() < 3) return p;
    std::vector<Vec2> h(2 * p.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        while (k >= 2 && orient2d(h[k - 2], h[k - 1], p[i]) <= 0) --k;
        h[k++] = p[i];
    }
    for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && orient2d(h[k - 2], h[k - 1], p[i]) <= 0) --k;
        h[k++] = p[i];
    }
    h.resize(k - 1);
    return h;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
    double a = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& p = poly[i];
        const auto& q = poly[(i + 1) % poly.size()];
        a += p[0] * q[1] - p[1] * q[0];
    }
    return 0.5 * a;
}

}  // namespace detail

class Triangulation2D {
public:
    using Tri = std::array<std::size_t, 3>;
    static constexpr std::size_t none = std::numeric_limits<std::size_t>::max();

    explicit Triangulation2D(std::vector<Vec2> vertices) : v_(std::move(vertices)) {
        if (v_.size() < 3) throw DomainError("2D triangulation needs at least three points");
        for (std::size_t i = 0; i < v_.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (v_[i] == v_[j]) throw DomainError("2D grid points must be pairwise distinct");
        hull_ = detail::convex_hull(v_);
        if (hull_.size() < 3) throw DomainError("2D grid points are collinear");
        hull_area_ = detail::polygon_area(hull_);
        double lo0 = v_[0][0], hi0 = v_[0][0], lo1 = v_[0][1], hi1 = v_[0][1];
        for (const auto& p : v_) {
            lo0 = std::min(lo0, p[0]);
            hi0 = std::max(hi0, p[0]);
            lo1 = std::min(lo1, p[1]);
            hi1 = std::max(hi1, p[1]);
        }
        scale_ = std::max(hi0 - lo0, hi1 - lo1);
        center_ = {0.5 * (lo0 + hi0), 0.5 * (lo1 + hi1)};
        bool ok = false;
        for (double factor : {20.0, 200.0, 2000.0, 20000.0}) {
            bowyer_watson(factor);
            lawson_flips();
            if (covers_hull()) {
                ok = true;
                break;
            }
        }
        if (!ok) throw DomainError("Delaunay construction failed to cover the convex hull");
        build_adjacency();
    }

    static Triangulation2D from_points(const std::vector<Point>& pts) {
        std::vector<Vec2> v;
        v.reserve(pts.size());
        for (const auto& p : pts) {
            if (p.size() != 2) throw DimensionMismatch("expected 2D points");
            v.push_back({p[0], p[1]});
        }
        return Triangulation2D(std::move(v));
    }

    std::size_t vertex_count() const { return v_.size(); }
    const std::vector<Vec2>& vertices() const { return v_; }
    const std::vector<Tri>& simplices() const { return tri_; }
    // neighbors()[t][e] is the triangle across the edge opposite vertex e of t.
    const std::vector<std::array<std::size_t, 3>>& neighbors() const { return adj_; }
    const std::vector<Vec2>& hull() const { return hull_; }

    // Barycentric coordinates of q in triangle t.
    std::array<double, 3> barycentric(std::size_t t, const Vec2& q) const {
        const auto& a = v_[tri_[t][0]];
        const auto& b = v_[tri_[t][1]];
        const auto& c = v_[tri_[t][2]];
        const double det = detail::orient2d(a, b, c);
        const double l1 = detail::orient2d(q, b, c) / det;
        const double l2 = detail::orient2d(a, q, c) / det;
        return {l1, l2, 1.0 - l1 - l2};
    }

    // Largest violation of the empty-circumcircle property, relative to scale^4.
    double delaunay_violation() const {
        double worst = 0.0;
        const double s4 = std::pow(scale_, 4);
        for (const auto& t : tri_)
            for (std::size_t k = 0; k < v_.size(); ++k) {
                if (k == t[0] || k == t[1] || k == t[2]) continue;
                worst = std::max(worst, detail::incircle(v_[t[0]], v_[t[1]], v_[t[2]], v_[k]) / s4);
            }
        return worst;
    }

private:
    double eps() const { return 1e-12 * std::pow(scale_, 4); }

    void bowyer_watson(double factor) {
        const std::size_t n = v_.size();
        std::vector<Vec2> pts = v_;
        const double m = factor * std::max(scale_, 1e-300);
        pts.push_back({center_[0] - m, center_[1] - m});
        pts.push_back({center_[0] + m, center_[1] - m});
        pts.push_back({center_[0], center_[1] + m});
        std::vector<Tri> tris{{n, n + 1, n + 2}};
        for (std::size_t p = 0; p < n; ++p) {
            std::vector<Tri> keep;
            std::map<std::pair<std::size_t, std::size_t>, int> edges;
            keep.reserve(tris.size() + 2);
            for (const auto& t : tris) {
                if (detail::incircle(pts[t[0]], pts[t[1]], pts[t[2]], pts[p]) > eps()) {
                    for (int e = 0; e < 3; ++e) {
                        std::size_t a = t[e], b = t[(e + 1) % 3];
                        auto key = std::minmax(a, b);
                        auto [it, inserted] = edges.try_emplace({key.first, key.second}, 0);
                        it->second = inserted ? (a < b ? 1 : 2) : 0;
                    }
                } else {
                    keep.push_back(t);
                }
            }
            for (const auto& [key, dir] : edges) {
                if (dir == 0) continue;
                const std::size_t a = dir == 1 ? key.first : key.second;
                const std::size_t b = dir == 1 ? key.second : key.first;
                if (detail::orient2d(pts[a], pts[b], pts[p]) > 0.0) keep.push_back({a, b, p});
            }
            tris.swap(keep);
        }
        tri_.clear();
        for (const auto& t : tris)
            if (t[0] < n && t[1] < n && t[2] < n) tri_.push_back(t);
    }

    void lawson_flips() {
        for (int pass = 0; pass < 1000; ++pass) {
            std::map<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, int>> owner;
            bool flipped = false;
            for (std::size_t t = 0; t < tri_.size() && !flipped; ++t) {
                for (int e = 0; e < 3 && !flipped; ++e) {
                    const std::size_t a = tri_[t][e], b = tri_[t][(e + 1) % 3];
                    auto twin = owner.find({b, a});
                    if (twin == owner.end()) {
                        owner[{a, b}] = {t, e};
                        continue;
                    }
                    const std::size_t u = twin->second.first;
                    const std::size_t c = tri_[t][(e + 2) % 3];
                    const std::size_t d = tri_[u][(twin->second.second + 2) % 3];
                    if (detail::incircle(v_[a], v_[b], v_[c], v_[d]) > eps() &&
                        detail::orient2d(v_[c], v_[a], v_[d]) > 0.0 && detail::orient2d(v_[d], v_[b], v_[c]) > 0.0) {
                        tri_[t] = {c, a, d};
                        tri_[u] = {d, b, c};
                        flipped = true;
                    }
                }
            }
            if (!flipped) return;
        }
    }

    bool covers_hull() const {
        double area = 0.0;
        std::vector<bool> used(v_.size(), false);
        for (const auto& t : tri_) {
            const double a = detail::orient2d(v_[t[0]], v_[t[1]], v_[t[2]]);
            if (!(a > 0.0)) return false;
            area += 0.5 * a;
            for (auto k : t) used[k] = true;
        }
        for (bool u : used)
            if (!u) return false;
        return std::abs(area - hull_area_) <= 1e-9 * hull_area_;
    }

    void build_adjacency() {
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> owner;
        for (std::size_t t = 0; t < tri_.size(); ++t)
            for (int e = 0; e < 3; ++e) owner[{tri_[t][e], tri_[t][(e + 1) % 3]}] = t;
        adj_.assign(tri_.size(), {none, none, none});
        for (std::size_t t = 0; t < tri_.size(); ++t)
            for (int e = 0; e < 3; ++e) {
                // edge opposite vertex e runs from e+1 to e+2
                const std::size_t a = tri_[t][(e + 1) % 3], b = tri_[t][(e + 2) % 3];
                auto it = owner.find({b, a});
                if (it != owner.end()) adj_[t][e] = it->second;
            }
    }

    std::vector<Vec2> v_;
    std::vector<Tri> tri_;
    std::vector<std::array<std::size_t, 3>> adj_;
    std::vector<Vec2> hull_;
    double hull_area_ = 0.0;
    double scale_ = 1.0;
    Vec2 center_{0.0, 0.0};
};

inline BarycentricSplit split(const Triangulation2D& tri, std::span<const double> q, double tol = 1e-9) {
    if (q.size() != 2) throw DimensionMismatch("2D split needs a 2D query point");
    const Vec2 p{q[0], q[1]};
    std::size_t best = 0;
    double best_min = -std::numeric_limits<double>::infinity();
    std::array<double, 3> best_l{};
    for (std::size_t t = 0; t < tri.simplices().size(); ++t) {
        const auto l = tri.barycentric(t, p);
        const double mn = std::min({l[0], l[1], l[2]});
        if (mn > best_min) {
            best_min = mn;
            best = t;
            best_l = l;
            if (mn >= 0.0) break;
        }
    }
    if (best_min < -tol) throw OutOfHullError("point lies outside the triangulation hull");
    std::array<std::pair<std::size_t, double>, 3> vw;
    for (int k = 0; k < 3; ++k) vw[k] = {tri.simplices()[best][k], std::max(best_l[k], 0.0)};
    std::sort(vw.begin(), vw.end());
    const double total = vw[0].second + vw[1].second + vw[2].second;
    BarycentricSplit s;
    s.simplex = best;
    for (const auto& [v, w] : vw) {
        s.vertices.push_back(v);
        s.weights.push_back(w / total);
    }
    return s;
}

}  // namespace martquant
