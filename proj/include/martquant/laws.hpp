#pragma once

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "martquant/errors.hpp"
#include "martquant/rng.hpp"

namespace martquant {

using Point = std::vector<double>;

struct Interval {
    double lo;
    double hi;
    bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
    double width() const { return hi - lo; }
};

// Anything exposing F, K(z) = E X 1{X<=z}, S(z) = E X^2 1{X<=z} and their
// left limits can be quantized in 1D.
template <class L>
concept Law1D = requires(const L& law, double z) {
    { law.cdf(z) } -> std::convertible_to<double>;
    { law.cdf_left(z) } -> std::convertible_to<double>;
    { law.partial_moment(z) } -> std::convertible_to<double>;
    { law.partial_moment_left(z) } -> std::convertible_to<double>;
    { law.partial_second_moment(z) } -> std::convertible_to<double>;
    { law.partial_second_moment_left(z) } -> std::convertible_to<double>;
    { law.mean() } -> std::convertible_to<double>;
    { law.second_moment() } -> std::convertible_to<double>;
    { law.support() } -> std::convertible_to<Interval>;
};

namespace detail {

inline double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

}  // namespace detail

class AnalyticLaw1D {
public:
    enum class Kind { Uniform, Normal, Exponential, PowerDensity2x, PointMass, FiniteAtoms };

    static AnalyticLaw1D uniform(double a, double b) {
        if (!(a < b) || !std::isfinite(a) || !std::isfinite(b))
            throw DomainError("uniform law needs finite a < b");
        return AnalyticLaw1D(Kind::Uniform, a, b - a);
    }
    static AnalyticLaw1D normal(double mean, double sd) {
        if (!(sd > 0.0) || !std::isfinite(mean) || !std::isfinite(sd))
            throw DomainError("normal law needs sd > 0");
        return AnalyticLaw1D(Kind::Normal, mean, sd);
    }
    static AnalyticLaw1D exponential(double rate) {
        if (!(rate > 0.0) || !std::isfinite(rate)) throw DomainError("exponential law needs rate > 0");
        return AnalyticLaw1D(Kind::Exponential, 0.0, 1.0 / rate);
    }
    // Density 2x on [0,1].
    static AnalyticLaw1D power_density_2x() { return AnalyticLaw1D(Kind::PowerDensity2x, 0.0, 1.0); }
    static AnalyticLaw1D point_mass(double x) {
        if (!std::isfinite(x)) throw DomainError("point mass location must be finite");
        return AnalyticLaw1D(Kind::PointMass, x, 1.0);
    }
    static AnalyticLaw1D finite_atoms(std::vector<double> points, std::vector<double> weights) {
        if (points.empty() || points.size() != weights.size())
            throw DomainError("finite atoms: points and weights must be non-empty and of equal size");
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!std::isfinite(points[i]) || !std::isfinite(weights[i]) || weights[i] < 0.0)
                throw DomainError("finite atoms: invalid point or negative weight");
            total += weights[i];
        }
        if (std::abs(total - 1.0) > 1e-12) throw DomainError("finite atoms: weights must sum to 1");
        std::vector<std::size_t> order(points.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t i, std::size_t j) { return points[i] < points[j]; });
        AnalyticLaw1D law(Kind::FiniteAtoms, 0.0, 1.0);
        for (std::size_t idx : order) {
            if (weights[idx] == 0.0) continue;
            if (!law.atom_x_.empty() && law.atom_x_.back() == points[idx]) {
                law.atom_w_.back() += weights[idx];
            } else {
                law.atom_x_.push_back(points[idx]);
                law.atom_w_.push_back(weights[idx]);
            }
        }
        law.atom_cum_.resize(law.atom_w_.size());
        std::partial_sum(law.atom_w_.begin(), law.atom_w_.end(), law.atom_cum_.begin());
        return law;
    }

    // Law of shift + scale * X.
    AnalyticLaw1D affine(double shift, double scale) const {
        if (!(scale > 0.0)) throw DomainError("affine image needs a positive scale");
        AnalyticLaw1D out = *this;
        if (kind_ == Kind::FiniteAtoms) {
            for (double& x : out.atom_x_) x = shift + scale * x;
        } else {
            out.shift_ = shift + scale * shift_;
            out.scale_ = scale * scale_;
        }
        return out;
    }

    Kind kind() const { return kind_; }
    bool is_atomic() const { return kind_ == Kind::PointMass || kind_ == Kind::FiniteAtoms; }

    std::string name() const {
        switch (kind_) {
            case Kind::Uniform: return "uniform";
            case Kind::Normal: return "normal";
            case Kind::Exponential: return "exponential";
            case Kind::PowerDensity2x: return "power2x";
            case Kind::PointMass: return "point_mass";
            case Kind::FiniteAtoms: return "finite_atoms";
        }
        return "?";
    }

    // Atoms of an atomic law, sorted by location.
    std::vector<std::pair<double, double>> atoms() const {
        std::vector<std::pair<double, double>> out;
        if (kind_ == Kind::PointMass) out.emplace_back(shift_, 1.0);
        if (kind_ == Kind::FiniteAtoms)
            for (std::size_t i = 0; i < atom_x_.size(); ++i) out.emplace_back(atom_x_[i], atom_w_[i]);
        return out;
    }

    double cdf(double z) const { return eval(z, false, 0); }
    double cdf_left(double z) const { return eval(z, true, 0); }
    double partial_moment(double z) const { return eval(z, false, 1); }
    double partial_moment_left(double z) const { return eval(z, true, 1); }
    double partial_second_moment(double z) const { return eval(z, false, 2); }
    double partial_second_moment_left(double z) const { return eval(z, true, 2); }

    double density(double z) const {
        const double t = (z - shift_) / scale_;
        double f0 = 0.0;
        switch (kind_) {
            case Kind::Uniform: f0 = (t >= 0.0 && t <= 1.0) ? 1.0 : 0.0; break;
            case Kind::Normal: f0 = detail::normal_pdf(t); break;
            case Kind::Exponential: f0 = t >= 0.0 ? std::exp(-t) : 0.0; break;
            case Kind::PowerDensity2x: f0 = (t >= 0.0 && t <= 1.0) ? 2.0 * t : 0.0; break;
            default: return 0.0;
        }
        return f0 / scale_;
    }

    double quantile(double u) const {
        if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile level must lie in (0,1)");
        if (kind_ == Kind::FiniteAtoms) {
            auto it = std::lower_bound(atom_cum_.begin(), atom_cum_.end(), u);
            if (it == atom_cum_.end()) return atom_x_.back();
            return atom_x_[static_cast<std::size_t>(it - atom_cum_.begin())];
        }
        double q0 = 0.0;
        switch (kind_) {
            case Kind::Uniform: q0 = u; break;
            case Kind::Normal: q0 = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u); break;
            case Kind::Exponential: q0 = -std::log1p(-u); break;
            case Kind::PowerDensity2x: q0 = std::sqrt(u); break;
            case Kind::PointMass: q0 = 0.0; break;
            default: break;
        }
        return shift_ + scale_ * q0;
    }

    double mean() const {
        if (kind_ == Kind::FiniteAtoms) {
            double m = 0.0;
            for (std::size_t i = 0; i < atom_x_.size(); ++i) m += atom_w_[i] * atom_x_[i];
            return m;
        }
        return shift_ + scale_ * base_moment(1);
    }

    double second_moment() const {
        if (kind_ == Kind::FiniteAtoms) {
            double m = 0.0;
            for (std::size_t i = 0; i < atom_x_.size(); ++i) m += atom_w_[i] * atom_x_[i] * atom_x_[i];
            return m;
        }
        return shift_ * shift_ + 2.0 * shift_ * scale_ * base_moment(1) + scale_ * scale_ * base_moment(2);
    }

    double variance() const {
        const double m = mean();
        return std::max(0.0, second_moment() - m * m);
    }

    Interval support() const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        switch (kind_) {
            case Kind::Uniform:
            case Kind::PowerDensity2x: return {shift_, shift_ + scale_};
            case Kind::Normal: return {-inf, inf};
            case Kind::Exponential: return {shift_, inf};
            case Kind::PointMass: return {shift_, shift_};
            case Kind::FiniteAtoms: return {atom_x_.front(), atom_x_.back()};
        }
        return {-inf, inf};
    }

    double draw(CounterRng& rng) const { return quantile(rng.uniform_open()); }

    std::vector<double> sample(std::size_t n, std::uint64_t seed) const {
        CounterRng rng(seed);
        std::vector<double> out(n);
        for (auto& v : out) v = draw(rng);
        return out;
    }

private:
    AnalyticLaw1D(Kind kind, double shift, double scale) : kind_(kind), shift_(shift), scale_(scale) {}

    double base_moment(int order) const {
        switch (kind_) {
            case Kind::Uniform: return order == 1 ? 0.5 : 1.0 / 3.0;
            case Kind::Normal: return order == 1 ? 0.0 : 1.0;
            case Kind::Exponential: return order == 1 ? 1.0 : 2.0;
            case Kind::PowerDensity2x: return order == 1 ? 2.0 / 3.0 : 0.5;
            default: return 0.0;
        }
    }

    // E X0^order 1{X0 <= t} (or < t when left) for the standardized base law.
    double base_partial(double t, bool left, int order) const {
        switch (kind_) {
            case Kind::Uniform: {
                const double c = std::clamp(t, 0.0, 1.0);
                return order == 0 ? c : order == 1 ? 0.5 * c * c : c * c * c / 3.0;
            }
            case Kind::PowerDensity2x: {
                const double c = std::clamp(t, 0.0, 1.0);
                const double c2 = c * c;
                return order == 0 ? c2 : order == 1 ? 2.0 * c2 * c / 3.0 : 0.5 * c2 * c2;
            }
            case Kind::Normal: {
                if (t == -std::numeric_limits<double>::infinity()) return 0.0;
                if (t == std::numeric_limits<double>::infinity()) return order == 0 ? 1.0 : base_moment(order);
                const double F = detail::normal_cdf(t);
                const double phi = detail::normal_pdf(t);
                return order == 0 ? F : order == 1 ? -phi : F - t * phi;
            }
            case Kind::Exponential: {
                if (t <= 0.0) return 0.0;
                if (std::isinf(t)) return order == 0 ? 1.0 : base_moment(order);
                const double e = std::exp(-t);
                if (order == 0) return -std::expm1(-t);
                if (order == 1) return 1.0 - e * (1.0 + t);
                return 2.0 - e * (t * t + 2.0 * t + 2.0);
            }
            case Kind::PointMass: {
                const bool in = left ? (0.0 < t) : (0.0 <= t);
                return (in && order == 0) ? 1.0 : 0.0;
            }
            default: return 0.0;
        }
    }

    double eval(double z, bool left, int order) const {
        if (kind_ == Kind::FiniteAtoms) {
            auto end = left ? std::lower_bound(atom_x_.begin(), atom_x_.end(), z)
                            : std::upper_bound(atom_x_.begin(), atom_x_.end(), z);
            const auto n = static_cast<std::size_t>(end - atom_x_.begin());
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double x = atom_x_[i];
                acc += atom_w_[i] * (order == 0 ? 1.0 : order == 1 ? x : x * x);
            }
            return order == 0 ? std::min(acc, 1.0) : acc;
        }
        const double t = (z - shift_) / scale_;
        const double F0 = base_partial(t, left, 0);
        if (order == 0) return F0;
        const double K0 = base_partial(t, left, 1);
        if (order == 1) return shift_ * F0 + scale_ * K0;
        const double S0 = base_partial(t, left, 2);
        return shift_ * shift_ * F0 + 2.0 * shift_ * scale_ * K0 + scale_ * scale_ * S0;
    }

    Kind kind_;
    double shift_ = 0.0;
    double scale_ = 1.0;
    std::vector<double> atom_x_;
    std::vector<double> atom_w_;
    std::vector<double> atom_cum_;
};

// Law of Z 1{Z in [alpha, beta]}: the base law restricted to [alpha, beta]
// plus an atom at 0 carrying the clipped mass.
class TruncatedLaw1D {
public:
    TruncatedLaw1D(AnalyticLaw1D base, double alpha, double beta, double centering_tol = 1e-10)
        : base_(std::move(base)), alpha_(alpha), beta_(beta) {
        if (!(alpha < 0.0) || !(beta > 0.0)) throw DomainError("truncation needs alpha < 0 < beta");
        f_a_ = base_.cdf_left(alpha_);
        k_a_ = base_.partial_moment_left(alpha_);
        s_a_ = base_.partial_second_moment_left(alpha_);
        atom_ = std::max(0.0, 1.0 - (base_.cdf(beta_) - f_a_));
        if (std::abs(centering_residual()) > centering_tol)
            throw DomainError("truncation interval is not centered: residual " +
                              std::to_string(centering_residual()));
    }

    // Chooses beta so that E Z 1{alpha <= Z <= beta} = 0.
    static TruncatedLaw1D centered(AnalyticLaw1D base, double alpha) {
        if (!(alpha < 0.0)) throw DomainError("truncation needs alpha < 0");
        const double k_alpha = base.partial_moment_left(alpha);
        auto g = [&](double b) { return base.partial_moment(b) - k_alpha; };
        const Interval sup = base.support();
        double lo = 0.0;
        if (g(lo) > 0.0) throw DomainError("no centered truncation: base mass below 0 is too small");
        double hi = std::isfinite(sup.hi) ? sup.hi : std::max(1.0, -alpha);
        if (!std::isfinite(sup.hi)) {
            while (g(hi) < 0.0 && hi < 1e300) hi *= 2.0;
        }
        if (g(hi) < 0.0) throw DomainError("no centered truncation for this alpha");
        if (hi <= 0.0) throw DomainError("no centered truncation: base support above 0 is empty");
        // Bisection to full double resolution.
        for (int it = 0; it < 2000 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (g(mid) < 0.0) lo = mid; else hi = mid;
        }
        double beta = hi;
        // For atomic bases the root is a jump; pick the end with the smaller residual.
        if (std::abs(g(lo)) < std::abs(g(hi)) && lo > 0.0) beta = lo;
        return TruncatedLaw1D(std::move(base), alpha, beta, 1e-10);
    }

    static TruncatedLaw1D symmetric(AnalyticLaw1D base, double a) {
        return TruncatedLaw1D(std::move(base), -a, a);
    }

    const AnalyticLaw1D& base() const { return base_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }

    double centering_residual() const {
        return base_.partial_moment(beta_) - k_a_;
    }
    double atom_at_zero() const { return atom_; }
    double apply(double z) const { return (z >= alpha_ && z <= beta_) ? z : 0.0; }

    double cdf(double z) const {
        double v = z >= 0.0 ? atom_at_zero() : 0.0;
        if (z >= alpha_) v += base_.cdf(std::min(z, beta_)) - f_a_;
        return std::clamp(v, 0.0, 1.0);
    }
    double cdf_left(double z) const {
        double v = z > 0.0 ? atom_at_zero() : 0.0;
        if (z > alpha_) v += (z > beta_ ? base_.cdf(beta_) : base_.cdf_left(z)) - f_a_;
        return std::clamp(v, 0.0, 1.0);
    }
    double partial_moment(double z) const {
        return z < alpha_ ? 0.0 : base_.partial_moment(std::min(z, beta_)) - k_a_;
    }
    double partial_moment_left(double z) const {
        if (z <= alpha_) return 0.0;
        return (z > beta_ ? base_.partial_moment(beta_) : base_.partial_moment_left(z)) - k_a_;
    }
    double partial_second_moment(double z) const {
        return z < alpha_ ? 0.0 : base_.partial_second_moment(std::min(z, beta_)) - s_a_;
    }
    double partial_second_moment_left(double z) const {
        if (z <= alpha_) return 0.0;
        return (z > beta_ ? base_.partial_second_moment(beta_) : base_.partial_second_moment_left(z)) - s_a_;
    }
    double mean() const { return centering_residual(); }
    double second_moment() const { return partial_second_moment(beta_); }
    Interval support() const {
        const Interval b = base_.support();
        Interval s{std::max(alpha_, b.lo), std::min(beta_, b.hi)};
        if (atom_at_zero() > 0.0 || s.lo > s.hi) {
            if (s.lo > s.hi) s = {0.0, 0.0};
            s.lo = std::min(s.lo, 0.0);
            s.hi = std::max(s.hi, 0.0);
        }
        return s;
    }

private:
    AnalyticLaw1D base_;
    double alpha_;
    double beta_;
    // Left limits at alpha and the clipped mass, fixed at construction.
    double f_a_ = 0.0, k_a_ = 0.0, s_a_ = 0.0, atom_ = 0.0;
};

// Law of shift + scale * Y. scale == 0 degenerates to a point mass.
template <Law1D L>
class AffineLaw {
public:
    AffineLaw(L base, double shift, double scale) : base_(std::move(base)), shift_(shift), scale_(scale) {
        if (scale < 0.0) throw DomainError("affine law needs a nonnegative scale");
    }

    double cdf(double z) const { return scale_ == 0.0 ? (z >= shift_ ? 1.0 : 0.0) : base_.cdf(t(z)); }
    double cdf_left(double z) const {
        return scale_ == 0.0 ? (z > shift_ ? 1.0 : 0.0) : base_.cdf_left(t(z));
    }
    double partial_moment(double z) const {
        if (scale_ == 0.0) return z >= shift_ ? shift_ : 0.0;
        const double u = t(z);
        return shift_ * base_.cdf(u) + scale_ * base_.partial_moment(u);
    }
    double partial_moment_left(double z) const {
        if (scale_ == 0.0) return z > shift_ ? shift_ : 0.0;
        const double u = t(z);
        return shift_ * base_.cdf_left(u) + scale_ * base_.partial_moment_left(u);
    }
    double partial_second_moment(double z) const {
        if (scale_ == 0.0) return z >= shift_ ? shift_ * shift_ : 0.0;
        const double u = t(z);
        return shift_ * shift_ * base_.cdf(u) + 2.0 * shift_ * scale_ * base_.partial_moment(u) +
               scale_ * scale_ * base_.partial_second_moment(u);
    }
    double partial_second_moment_left(double z) const {
        if (scale_ == 0.0) return z > shift_ ? shift_ * shift_ : 0.0;
        const double u = t(z);
        return shift_ * shift_ * base_.cdf_left(u) + 2.0 * shift_ * scale_ * base_.partial_moment_left(u) +
               scale_ * scale_ * base_.partial_second_moment_left(u);
    }
    double mean() const { return shift_ + scale_ * base_.mean(); }
    double second_moment() const {
        return shift_ * shift_ + 2.0 * shift_ * scale_ * base_.mean() + scale_ * scale_ * base_.second_moment();
    }
    Interval support() const {
        const Interval s = base_.support();
        if (scale_ == 0.0) return {shift_, shift_};
        return {shift_ + scale_ * s.lo, shift_ + scale_ * s.hi};
    }
    const L& base() const { return base_; }
    double shift() const { return shift_; }
    double scale() const { return scale_; }

private:
    double t(double z) const { return (z - shift_) / scale_; }
    L base_;
    double shift_;
    double scale_;
};

template <Law1D L>
class MixtureLaw {
public:
    MixtureLaw(std::vector<L> components, std::vector<double> weights)
        : comps_(std::move(components)), w_(std::move(weights)) {
        if (comps_.empty() || comps_.size() != w_.size())
            throw DomainError("mixture needs matching non-empty components and weights");
        double total = 0.0;
        for (double w : w_) {
            if (!(w >= 0.0)) throw DomainError("mixture weights must be nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9) throw DomainError("mixture weights must sum to 1");
    }

    double cdf(double z) const { return std::min(1.0, sum([&](const L& c) { return c.cdf(z); })); }
    double cdf_left(double z) const { return std::min(1.0, sum([&](const L& c) { return c.cdf_left(z); })); }
    double partial_moment(double z) const { return sum([&](const L& c) { return c.partial_moment(z); }); }
    double partial_moment_left(double z) const {
        return sum([&](const L& c) { return c.partial_moment_left(z); });
    }
    double partial_second_moment(double z) const {
        return sum([&](const L& c) { return c.partial_second_moment(z); });
    }
    double partial_second_moment_left(double z) const {
        return sum([&](const L& c) { return c.partial_second_moment_left(z); });
    }
    double mean() const { return sum([](const L& c) { return c.mean(); }); }
    double second_moment() const { return sum([](const L& c) { return c.second_moment(); }); }
    Interval support() const {
        Interval s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (std::size_t i = 0; i < comps_.size(); ++i) {
            if (w_[i] <= 0.0) continue;
            const Interval c = comps_[i].support();
            s.lo = std::min(s.lo, c.lo);
            s.hi = std::max(s.hi, c.hi);
        }
        return s;
    }
    const std::vector<L>& components() const { return comps_; }
    const std::vector<double>& weights() const { return w_; }

private:
    template <class F>
    double sum(F&& f) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < comps_.size(); ++i)
            if (w_[i] > 0.0) acc += w_[i] * f(comps_[i]);
        return acc;
    }
    std::vector<L> comps_;
    std::vector<double> w_;
};

// Rotation-invariant noise in R^q.
class RadialLawQ {
public:
    enum class Kind { StandardGaussian, UniformBall };

    static RadialLawQ standard_gaussian(std::size_t q) { return RadialLawQ(Kind::StandardGaussian, q, 0.0); }
    static RadialLawQ uniform_ball(std::size_t q, double radius) {
        if (!(radius > 0.0)) throw DomainError("ball radius must be positive");
        return RadialLawQ(Kind::UniformBall, q, radius);
    }

    std::size_t dimension() const { return q_; }
    Kind kind() const { return kind_; }
    double radius() const { return radius_; }

    // E|Z|^2.
    double second_moment() const {
        const double q = static_cast<double>(q_);
        return kind_ == Kind::StandardGaussian ? q : q * radius_ * radius_ / (q + 2.0);
    }

    Point draw(CounterRng& rng) const {
        Point z(q_);
        for (auto& v : z) v = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * rng.uniform_open());
        if (kind_ == Kind::UniformBall) {
            double norm = 0.0;
            for (double v : z) norm += v * v;
            norm = std::sqrt(norm);
            const double r = radius_ * std::pow(rng.uniform_open(), 1.0 / static_cast<double>(q_));
            for (auto& v : z) v *= r / norm;
        }
        return z;
    }

    std::vector<Point> sample(std::size_t n, std::uint64_t seed) const {
        CounterRng rng(seed);
        std::vector<Point> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(draw(rng));
        return out;
    }

private:
    RadialLawQ(Kind kind, std::size_t q, double radius) : kind_(kind), q_(q), radius_(radius) {
        if (q == 0) throw DomainError("noise dimension must be positive");
    }
    Kind kind_;
    std::size_t q_;
    double radius_;
};

}  // namespace martquant
