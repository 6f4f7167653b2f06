#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "martquant/errors.hpp"
#include "martquant/laws.hpp"
#include "martquant/quadrature.hpp"
#include "martquant/rng.hpp"

namespace martquant {

class Grid1D {
public:
    Grid1D() = default;
    explicit Grid1D(std::vector<double> points) : pts_(std::move(points)) {
        if (pts_.empty()) throw DomainError("grid must contain at least one point");
        for (std::size_t i = 0; i < pts_.size(); ++i) {
            if (!std::isfinite(pts_[i])) throw DomainError("grid points must be finite");
            if (i > 0 && !(pts_[i - 1] < pts_[i])) throw DomainError("grid points must be strictly increasing");
        }
    }
    std::size_t size() const { return pts_.size(); }
    double operator[](std::size_t i) const { return pts_[i]; }
    const std::vector<double>& points() const { return pts_; }
    auto begin() const { return pts_.begin(); }
    auto end() const { return pts_.end(); }

    // Cell i is (b[i], b[i+1]] with b[0] = -inf and b[N] = +inf.
    std::vector<double> cell_boundaries() const {
        std::vector<double> b(pts_.size() + 1);
        b.front() = -std::numeric_limits<double>::infinity();
        b.back() = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < pts_.size(); ++i) b[i] = 0.5 * (pts_[i - 1] + pts_[i]);
        return b;
    }

private:
    std::vector<double> pts_;
};

class GridD {
public:
    GridD() = default;
    explicit GridD(std::vector<Point> points) : pts_(std::move(points)) {
        if (pts_.empty()) throw DomainError("grid must contain at least one point");
        dim_ = pts_.front().size();
        if (dim_ == 0) throw DomainError("grid points must have positive dimension");
        for (std::size_t i = 0; i < pts_.size(); ++i) {
            if (pts_[i].size() != dim_) throw DimensionMismatch("grid points have inconsistent dimensions");
            for (std::size_t j = 0; j < i; ++j)
                if (pts_[i] == pts_[j]) throw DomainError("grid points must be pairwise distinct");
        }
    }
    std::size_t size() const { return pts_.size(); }
    std::size_t dimension() const { return dim_; }
    const Point& operator[](std::size_t i) const { return pts_[i]; }
    const std::vector<Point>& points() const { return pts_; }

private:
    std::vector<Point> pts_;
    std::size_t dim_ = 0;
};

template <class Grid>
struct VoronoiQuantization {
    Grid grid;
    std::vector<double> weights;
    double distortion = 0.0;
    double stationarity_residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> history;  // distortion per iteration, when requested
};

inline std::size_t nn_project(const Grid1D& grid, double xi) {
    const auto& x = grid.points();
    std::size_t lo = 0;
    std::size_t hi = x.size() - 1;
    // first i with xi <= (x_i + x_{i+1}) / 2
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (xi <= 0.5 * (x[mid] + x[mid + 1])) hi = mid; else lo = mid + 1;
    }
    return lo;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

inline std::size_t nn_project(const GridD& grid, std::span<const double> xi) {
    if (xi.size() != grid.dimension()) throw DimensionMismatch("query dimension differs from grid dimension");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double d = squared_distance(grid[i], xi);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

template <Law1D L>
std::vector<double> voronoi_weights(const Grid1D& grid, const L& law) {
    const auto b = grid.cell_boundaries();
    std::vector<double> w(grid.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double next = (i + 1 == grid.size()) ? 1.0 : law.cdf(b[i + 1]);
        w[i] = std::max(0.0, next - prev);
        prev = next;
    }
    return w;
}

// Quadratic distortion e_2 from the closed-form partial moments.
template <Law1D L>
double quadratic_distortion(const Grid1D& grid, const L& law) {
    const auto b = grid.cell_boundaries();
    double total = 0.0;
    double F0 = 0.0, K0 = 0.0, S0 = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double F1, K1, S1;
        if (i + 1 == grid.size()) {
            F1 = 1.0;
            K1 = law.mean();
            S1 = law.second_moment();
        } else {
            F1 = law.cdf(b[i + 1]);
            K1 = law.partial_moment(b[i + 1]);
            S1 = law.partial_second_moment(b[i + 1]);
        }
        const double x = grid[i];
        total += std::max(0.0, (S1 - S0) - 2.0 * x * (K1 - K0) + x * x * (F1 - F0));
        F0 = F1;
        K0 = K1;
        S0 = S1;
    }
    return std::sqrt(total);
}

// L^p distortion e_p(grid, law).
inline double distortion(const Grid1D& grid, const AnalyticLaw1D& law, double p = 2.0) {
    if (!(p >= 1.0)) throw DomainError("distortion exponent must be >= 1");
    double total = 0.0;
    if (law.is_atomic()) {
        for (auto [x, w] : law.atoms()) total += w * std::pow(std::abs(x - grid[nn_project(grid, x)]), p);
        return std::pow(total, 1.0 / p);
    }
    if (p == 2.0) return quadratic_distortion(grid, law);
    const auto b = grid.cell_boundaries();
    const Interval sup = law.support();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double xi = grid[i];
        auto f = [&](double z) { return std::pow(std::abs(z - xi), p) * law.density(z); };
        const double lo = std::max(b[i], sup.lo);
        const double hi = std::min(b[i + 1], sup.hi);
        if (!(lo < hi)) continue;
        if (xi > lo && xi < hi) {
            total += integrate(f, lo, xi) + integrate(f, xi, hi);
        } else {
            total += integrate(f, lo, hi);
        }
    }
    return std::pow(total, 1.0 / p);
}

inline double distortion(const Grid1D& grid, std::span<const double> sample, double p = 2.0) {
    if (sample.empty()) throw DomainError("empty sample");
    double total = 0.0;
    for (double x : sample) total += std::pow(std::abs(x - grid[nn_project(grid, x)]), p);
    return std::pow(total / static_cast<double>(sample.size()), 1.0 / p);
}

inline double distortion(const GridD& grid, const std::vector<Point>& sample, double p = 2.0) {
    if (sample.empty()) throw DomainError("empty sample");
    double total = 0.0;
    for (const auto& x : sample) {
        const double d2 = squared_distance(grid[nn_project(grid, x)], x);
        total += p == 2.0 ? d2 : std::pow(d2, 0.5 * p);
    }
    return std::pow(total / static_cast<double>(sample.size()), 1.0 / p);
}

struct LloydOptions {
    double tol = 1e-12;
    std::size_t max_iter = 100000;
    bool record_history = false;
};

namespace detail {

template <class L>
concept HasQuantile = requires(const L& law, double u) {
    { law.quantile(u) } -> std::convertible_to<double>;
};

template <Law1D L>
std::vector<double> default_voronoi_init(const L& law, std::size_t n) {
    std::vector<double> x(n);
    if constexpr (HasQuantile<L>) {
        for (std::size_t i = 0; i < n; ++i)
            x[i] = law.quantile((2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n)));
        bool strict = true;
        for (std::size_t i = 1; i < n; ++i) strict = strict && x[i - 1] < x[i];
        if (strict) return x;
        if constexpr (std::same_as<L, AnalyticLaw1D>) {
            const auto atoms = law.atoms();
            if (atoms.size() < n) throw DomainError("law support has fewer points than the grid size");
            for (std::size_t i = 0; i < n; ++i) x[i] = atoms[(i * (atoms.size() - 1)) / std::max<std::size_t>(n - 1, 1)].first;
            return x;
        }
    }
    const Interval s = law.support();
    if (!s.bounded() || !(s.lo < s.hi)) throw DomainError("cannot build a default grid for this law");
    for (std::size_t i = 0; i < n; ++i)
        x[i] = s.lo + s.width() * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
    return x;
}

}  // namespace detail

// Lloyd's fixed point x_i <- E(X | X in C_i) in 1D.
template <Law1D L>
VoronoiQuantization<Grid1D> lloyd_1d(const L& law, std::size_t n, std::optional<Grid1D> init = std::nullopt,
                                     const LloydOptions& opt = {}) {
    if (n == 0) throw DomainError("grid size must be at least 1");
    VoronoiQuantization<Grid1D> out;
    if (n == 1) {
        out.grid = Grid1D({law.mean()});
        out.weights = {1.0};
        out.distortion = quadratic_distortion(out.grid, law);
        out.converged = true;
        return out;
    }
    std::vector<double> x;
    if (init) {
        if (init->size() != n) throw DomainError("initial grid has the wrong size");
        x = init->points();
    } else {
        x = detail::default_voronoi_init(law, n);
    }
    std::vector<double> next(n), F(n + 1), K(n + 1);
    auto centroids = [&](const std::vector<double>& g, std::vector<double>& c) {
        F[0] = 0.0;
        K[0] = 0.0;
        F[n] = 1.0;
        K[n] = law.mean();
        for (std::size_t i = 1; i < n; ++i) {
            const double m = 0.5 * (g[i - 1] + g[i]);
            F[i] = law.cdf(m);
            K[i] = law.partial_moment(m);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double dF = F[i + 1] - F[i];
            if (!(dF > 0.0))
                throw EmptyCellError(i, "Voronoi cell " + std::to_string(i) + " carries no mass");
            c[i] = (K[i + 1] - K[i]) / dF;
        }
    };
    std::size_t it = 0;
    for (; it < opt.max_iter; ++it) {
        if (opt.record_history) out.history.push_back(quadratic_distortion(Grid1D(x), law));
        centroids(x, next);
        double move = 0.0;
        for (std::size_t i = 0; i < n; ++i) move = std::max(move, std::abs(next[i] - x[i]));
        x.swap(next);
        for (std::size_t i = 1; i < n; ++i)
            if (!(x[i - 1] < x[i])) throw EmptyCellError(i, "Lloyd iterate lost strict ordering");
        if (move < opt.tol) {
            out.converged = true;
            ++it;
            break;
        }
    }
    out.iterations = it;
    out.grid = Grid1D(x);
    out.weights = voronoi_weights(out.grid, law);
    out.distortion = quadratic_distortion(out.grid, law);
    centroids(x, next);
    for (std::size_t i = 0; i < n; ++i)
        out.stationarity_residual = std::max(out.stationarity_residual, std::abs(next[i] - x[i]));
    return out;
}

struct KmeansOptions {
    double tol = 1e-10;
    std::size_t max_iter = 1000;
    std::uint64_t seed = 0;
    bool record_history = false;
};

// Batch k-means (Lloyd's method on an empirical measure). Empty cells are
// re-seeded at the sample point farthest from its assigned center.
inline VoronoiQuantization<GridD> kmeans(const std::vector<Point>& sample, std::size_t n,
                                         std::optional<GridD> init = std::nullopt,
                                         const KmeansOptions& opt = {}) {
    if (n == 0) throw DomainError("grid size must be at least 1");
    if (sample.size() < n) throw DomainError("sample smaller than grid size");
    const std::size_t d = sample.front().size();
    for (const auto& s : sample)
        if (s.size() != d) throw DimensionMismatch("sample points have inconsistent dimensions");

    std::vector<Point> c;
    if (init) {
        if (init->size() != n || init->dimension() != d) throw DimensionMismatch("initial grid does not match");
        c = init->points();
    } else {
        std::vector<std::size_t> perm(sample.size());
        std::iota(perm.begin(), perm.end(), 0);
        CounterRng rng(opt.seed);
        for (std::size_t i = 0; i < perm.size() && c.size() < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(perm.size() - i));
            std::swap(perm[i], perm[std::min(j, perm.size() - 1)]);
            const Point& cand = sample[perm[i]];
            if (std::find(c.begin(), c.end(), cand) == c.end()) c.push_back(cand);
        }
        if (c.size() < n) throw DomainError("sample has fewer distinct points than the grid size");
    }

    const std::size_t m = sample.size();
    std::vector<std::size_t> assign(m, 0);
    std::vector<double> dist2(m, 0.0);
    auto assign_all = [&] {
        double total = 0.0;
        for (std::size_t s = 0; s < m; ++s) {
            std::size_t best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                const double dd = squared_distance(c[i], sample[s]);
                if (dd < bd) {
                    bd = dd;
                    best = i;
                }
            }
            assign[s] = best;
            dist2[s] = bd;
            total += bd;
        }
        return total / static_cast<double>(m);
    };

    VoronoiQuantization<GridD> out;
    std::vector<Point> sums(n, Point(d, 0.0));
    std::vector<std::size_t> counts(n, 0);
    std::size_t it = 0;
    double err = assign_all();
    for (; it < opt.max_iter; ++it) {
        if (opt.record_history) out.history.push_back(std::sqrt(err));
        for (auto& s : sums) std::fill(s.begin(), s.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t s = 0; s < m; ++s) {
            ++counts[assign[s]];
            for (std::size_t k = 0; k < d; ++k) sums[assign[s]][k] += sample[s][k];
        }
        double move = 0.0;
        bool reseeded = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (counts[i] == 0) {
                std::size_t far = 0;
                for (std::size_t s = 1; s < m; ++s)
                    if (dist2[s] > dist2[far]) far = s;
                c[i] = sample[far];
                dist2[far] = 0.0;
                reseeded = true;
                move = std::numeric_limits<double>::infinity();
                continue;
            }
            Point next(d);
            for (std::size_t k = 0; k < d; ++k) next[k] = sums[i][k] / static_cast<double>(counts[i]);
            move = std::max(move, std::sqrt(squared_distance(next, c[i])));
            c[i] = std::move(next);
        }
        err = assign_all();
        if (!reseeded && move < opt.tol) {
            out.converged = true;
            ++it;
            break;
        }
    }
    out.iterations = it;
    std::fill(counts.begin(), counts.end(), 0);
    for (auto& s : sums) std::fill(s.begin(), s.end(), 0.0);
    for (std::size_t s = 0; s < m; ++s) {
        ++counts[assign[s]];
        for (std::size_t k = 0; k < d; ++k) sums[assign[s]][k] += sample[s][k];
    }
    out.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.weights[i] = static_cast<double>(counts[i]) / static_cast<double>(m);
        if (counts[i] > 0) {
            double r = 0.0;
            for (std::size_t k = 0; k < d; ++k)
                r = std::max(r, std::abs(sums[i][k] / static_cast<double>(counts[i]) - c[i][k]));
            out.stationarity_residual = std::max(out.stationarity_residual, r);
        }
    }
    out.grid = GridD(c);
    out.distortion = std::sqrt(err);
    return out;
}

}  // namespace martquant
