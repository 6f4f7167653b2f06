#pragma once

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "martquant/errors.hpp"
#include "martquant/laws.hpp"
#include "martquant/order.hpp"
#include "martquant/primal.hpp"
#include "martquant/rng.hpp"

namespace martquant {

// Lipschitz and growth constants of a coefficient x -> theta(x) in M_{d,q}:
// |||theta(x)|||^2 <= c (1 + |x|^2), ||theta(x)||_Fr^2 <= c_fr (1 + |x|^2).
struct ThetaConstants {
    double lip = 0.0;
    double lip_fr = 0.0;
    double c = 0.0;
    double c_fr = 0.0;
    bool declared = false;
};

// Operator norm of a d x q row-major matrix.
inline double operator_norm(std::span<const double> a, std::size_t d, std::size_t q) {
    if (d == 1 || q == 1) {
        double s = 0.0;
        for (double v : a) s += v * v;
        return std::sqrt(s);
    }
    // Largest eigenvalue of A'A by power iteration.
    std::vector<double> v(q, 1.0 / std::sqrt(static_cast<double>(q))), w(d), u(q);
    double lam = 0.0;
    for (int it = 0; it < 200; ++it) {
        for (std::size_t r = 0; r < d; ++r) {
            w[r] = 0.0;
            for (std::size_t c = 0; c < q; ++c) w[r] += a[r * q + c] * v[c];
        }
        double n = 0.0;
        for (std::size_t c = 0; c < q; ++c) {
            u[c] = 0.0;
            for (std::size_t r = 0; r < d; ++r) u[c] += a[r * q + c] * w[r];
            n += u[c] * u[c];
        }
        n = std::sqrt(n);
        if (n == 0.0) return 0.0;
        const double prev = lam;
        lam = n;
        for (std::size_t c = 0; c < q; ++c) v[c] = u[c] / n;
        if (std::abs(lam - prev) <= 1e-15 * lam) break;
    }
    return std::sqrt(lam);
}

class Theta {
public:
    using Fn = std::function<void(std::span<const double>, std::span<double>)>;

    Theta() = default;
    Theta(std::size_t d, std::size_t q, Fn f, ThetaConstants k, std::string name)
        : d_(d), q_(q), f_(std::move(f)), k_(k), name_(std::move(name)) {
        if (d == 0 || q == 0) throw DomainError("theta dimensions must be positive");
    }

    // User scalar coefficient; constants must be declared to be used in bounds.
    static Theta scalar(std::function<double(double)> f, ThetaConstants k = {}, std::string name = "user") {
        return Theta(1, 1, [f = std::move(f)](std::span<const double> x, std::span<double> out) { out[0] = f(x[0]); },
                     k, std::move(name));
    }

    static Theta constant(double s) {
        return Theta(1, 1, [s](std::span<const double>, std::span<double> out) { out[0] = s; },
                     {0.0, 0.0, s * s, s * s, true}, "constant");
    }

    static Theta constant_matrix(std::size_t d, std::size_t q, std::vector<double> m) {
        if (m.size() != d * q) throw DimensionMismatch("constant matrix has the wrong size");
        double fr = 0.0;
        for (double v : m) fr += v * v;
        const double op = operator_norm(m, d, q);
        return Theta(d, q, [m](std::span<const double>, std::span<double> out) { std::copy(m.begin(), m.end(), out.begin()); },
                     {0.0, 0.0, op * op, fr, true}, "constant_matrix");
    }

    // x -> max(floor, s |a + b x|)
    static Theta scalar_affine_abs(double a, double b, double s, double floor = 0.0) {
        if (!(s >= 0.0) || !(floor >= 0.0)) throw DomainError("scale and floor must be nonnegative");
        const double lip = std::abs(s * b);
        const double c = std::max(s * s * (a * a + b * b), floor * floor);
        return Theta(1, 1,
                     [a, b, s, floor](std::span<const double> x, std::span<double> out) {
                         out[0] = std::max(floor, s * std::abs(a + b * x[0]));
                     },
                     {lip, lip, c, c, true}, "affine_abs");
    }

    // x -> a + b x (may change sign)
    static Theta scalar_affine(double a, double b) {
        const double lip = std::abs(b), c = a * a + b * b;
        return Theta(1, 1, [a, b](std::span<const double> x, std::span<double> out) { out[0] = a + b * x[0]; },
                     {lip, lip, c, c, true}, "affine");
    }

    Theta scaled(double factor) const {
        if (!(factor >= 0.0)) throw DomainError("theta scaling must be nonnegative");
        ThetaConstants k = k_;
        k.lip *= factor;
        k.lip_fr *= factor;
        k.c *= factor * factor;
        k.c_fr *= factor * factor;
        Fn g = [f = f_, factor](std::span<const double> x, std::span<double> out) {
            f(x, out);
            for (double& v : out) v *= factor;
        };
        return Theta(d_, q_, std::move(g), k, name_);
    }

    std::size_t dim() const { return d_; }
    std::size_t noise_dim() const { return q_; }
    const ThetaConstants& constants() const { return k_; }
    const std::string& name() const { return name_; }
    explicit operator bool() const { return static_cast<bool>(f_); }

    void eval(std::span<const double> x, std::span<double> out) const { f_(x, out); }
    std::vector<double> eval(std::span<const double> x) const {
        std::vector<double> out(d_ * q_);
        f_(x, out);
        return out;
    }
    double scalar_value(double x) const {
        double out = 0.0;
        f_(std::span<const double>(&x, 1), std::span<double>(&out, 1));
        return out;
    }

private:
    std::size_t d_ = 1, q_ = 1;
    Fn f_;
    ThetaConstants k_;
    std::string name_;
};

struct ArchSpec {
    std::size_t d = 1;
    std::size_t q = 1;
    std::vector<Theta> theta;  // one coefficient per step

    std::size_t steps() const { return theta.size(); }

    void validate() const {
        if (theta.empty()) throw DomainError("ARCH model needs at least one step");
        for (const auto& t : theta) {
            if (!t) throw DomainError("missing coefficient function");
            if (t.dim() != d || t.noise_dim() != q) throw DimensionMismatch("coefficient has the wrong shape");
        }
    }

    static ArchSpec homogeneous(const Theta& t, std::size_t n) {
        ArchSpec a;
        a.d = t.dim();
        a.q = t.noise_dim();
        a.theta.assign(n, t);
        return a;
    }

    // theta_k = sqrt(T/n) theta(t_k, .), t_k = kT/n.
    static ArchSpec euler(const std::function<Theta(double)>& theta_at, double horizon, std::size_t n) {
        if (!(horizon > 0.0) || n == 0) throw DomainError("Euler scheme needs T > 0 and n >= 1");
        const double h = horizon / static_cast<double>(n);
        ArchSpec a;
        for (std::size_t k = 0; k < n; ++k) a.theta.push_back(theta_at(static_cast<double>(k) * h).scaled(std::sqrt(h)));
        a.d = a.theta.front().dim();
        a.q = a.theta.front().noise_dim();
        return a;
    }
    static ArchSpec euler(const Theta& t, double horizon, std::size_t n) {
        return euler([t](double) { return t; }, horizon, n);
    }
};

struct QuasiWhiteResiduals {
    double mean = 0.0;           // max_i |E Zb^i|
    double orthogonality = 0.0;  // max_{i,j} |E (Z^i - Zb^i) Zb^j|
};

// Noise of one step and its quasi-white replacement Zb computed from the same draw Z.
class StepNoise {
public:
    enum class Mode { Exact, Truncated, Ball, Quantized };

    static StepNoise exact(AnalyticLaw1D base, std::size_t q = 1) {
        StepNoise s(Mode::Exact, std::move(base), q);
        return s;
    }
    // Componentwise truncation Z^i 1{alpha <= Z^i <= beta}.
    static StepNoise truncated(TruncatedLaw1D t, std::size_t q = 1) {
        StepNoise s(Mode::Truncated, t.base(), q);
        s.trunc_ = std::move(t);
        return s;
    }
    // Z 1{|Z| <= a} for standard Gaussian Z in R^q.
    static StepNoise ball(std::size_t q, double a) {
        if (!(a > 0.0)) throw DomainError("truncation radius must be positive");
        StepNoise s(Mode::Ball, AnalyticLaw1D::normal(0.0, 1.0), q);
        s.radius_ = a;
        return s;
    }
    // Product Voronoi quantization with a stationary grid per coordinate.
    static StepNoise quantized(AnalyticLaw1D base, std::size_t points, std::size_t q = 1, const LloydOptions& opt = {}) {
        auto vq = lloyd_1d(base, points, std::nullopt, opt);
        return quantized_grid(std::move(base), vq.grid, q);
    }
    static StepNoise quantized_grid(AnalyticLaw1D base, Grid1D grid, std::size_t q = 1) {
        StepNoise s(Mode::Quantized, std::move(base), q);
        s.qweights_ = voronoi_weights(grid, s.base_);
        s.qgrid_ = std::move(grid);
        return s;
    }

    Mode mode() const { return mode_; }
    std::size_t dim() const { return q_; }
    const AnalyticLaw1D& base() const { return base_; }
    const std::optional<TruncatedLaw1D>& truncation() const { return trunc_; }
    double radius() const { return radius_; }
    const Grid1D& quantizer() const { return qgrid_; }
    const std::vector<double>& quantizer_weights() const { return qweights_; }

    std::string describe() const {
        switch (mode_) {
            case Mode::Exact: return "exact";
            case Mode::Truncated: return "truncated";
            case Mode::Ball: return "ball";
            case Mode::Quantized: return "quantized";
        }
        return "?";
    }

    void draw(CounterRng& rng, std::span<double> z) const {
        for (double& v : z) v = base_.draw(rng);
    }

    void apply(std::span<const double> z, std::span<double> zb) const {
        switch (mode_) {
            case Mode::Exact: std::copy(z.begin(), z.end(), zb.begin()); break;
            case Mode::Truncated:
                for (std::size_t i = 0; i < q_; ++i) zb[i] = trunc_->apply(z[i]);
                break;
            case Mode::Ball: {
                double r2 = 0.0;
                for (double v : z) r2 += v * v;
                const bool keep = r2 <= radius_ * radius_;
                for (std::size_t i = 0; i < q_; ++i) zb[i] = keep ? z[i] : 0.0;
                break;
            }
            case Mode::Quantized:
                for (std::size_t i = 0; i < q_; ++i) zb[i] = qgrid_[nn_project(qgrid_, z[i])];
                break;
        }
    }

    // E|Z|^2
    double second_moment() const { return static_cast<double>(q_) * base_.second_moment(); }

    // max_i E (Z^i - Zb^i)^2
    double coordinate_error_sq() const {
        switch (mode_) {
            case Mode::Exact: return 0.0;
            case Mode::Truncated: {
                // Z - Zb = Z 1{Z outside [alpha, beta]}
                return base_.second_moment() - (base_.partial_second_moment(trunc_->beta()) -
                                                base_.partial_second_moment_left(trunc_->alpha()));
            }
            case Mode::Ball: return error_sq() / static_cast<double>(q_);
            case Mode::Quantized: {
                const double e = quadratic_distortion(qgrid_, base_);
                return e * e;
            }
        }
        return 0.0;
    }

    // E|Z - Zb|^2
    double error_sq() const {
        if (mode_ == Mode::Ball) {
            // E|Z|^2 1{|Z| > a} = q Q(q/2 + 1, a^2/2) for a chi-distributed radius.
            const double q = static_cast<double>(q_);
            return q * boost::math::gamma_q(q / 2.0 + 1.0, radius_ * radius_ / 2.0);
        }
        return static_cast<double>(q_) * coordinate_error_sq();
    }

    QuasiWhiteResiduals residuals() const {
        QuasiWhiteResiduals r;
        switch (mode_) {
            case Mode::Exact:
                r.mean = std::abs(base_.mean());
                r.orthogonality = 0.0;
                break;
            case Mode::Ball: break;  // symmetric, disjoint supports
            case Mode::Truncated: {
                const double m = trunc_->mean();
                r.mean = std::abs(m);
                // Same coordinate: disjoint supports. Other coordinates: E(Z - Zb) E Zb.
                r.orthogonality = q_ > 1 ? std::abs((base_.mean() - m) * m) : 0.0;
                break;
            }
            case Mode::Quantized: {
                const auto b = qgrid_.cell_boundaries();
                double m = 0.0, same = 0.0;
                double K0 = 0.0;
                for (std::size_t i = 0; i < qgrid_.size(); ++i) {
                    const double K1 = i + 1 == qgrid_.size() ? base_.mean() : base_.partial_moment(b[i + 1]);
                    const double x = qgrid_[i];
                    m += qweights_[i] * x;
                    same += x * ((K1 - K0) - x * qweights_[i]);
                    K0 = K1;
                }
                r.mean = std::abs(m);
                r.orthogonality = std::max(std::abs(same), q_ > 1 ? std::abs((base_.mean() - m) * m) : 0.0);
                break;
            }
        }
        return r;
    }

    // Law of Zb for the quantized mode (product grid in q dimensions).
    DiscreteDistribution finite_law() const {
        if (mode_ != Mode::Quantized) throw DomainError("finite law is only defined for quantized noise");
        const std::size_t m = qgrid_.size();
        std::size_t total = 1;
        for (std::size_t i = 0; i < q_; ++i) total *= m;
        std::vector<Point> pts;
        std::vector<double> w;
        double s = 0.0;
        for (std::size_t k = 0; k < total; ++k) {
            Point p(q_);
            double wk = 1.0;
            std::size_t r = k;
            for (std::size_t i = q_; i-- > 0;) {
                p[i] = qgrid_[r % m];
                wk *= qweights_[r % m];
                r /= m;
            }
            pts.push_back(std::move(p));
            w.push_back(wk);
            s += wk;
        }
        for (double& v : w) v /= s;
        return DiscreteDistribution(std::move(pts), std::move(w), 1e-9);
    }

private:
    StepNoise(Mode mode, AnalyticLaw1D base, std::size_t q) : mode_(mode), base_(std::move(base)), q_(q) {
        if (q == 0) throw DomainError("noise dimension must be positive");
    }

    Mode mode_;
    AnalyticLaw1D base_;
    std::size_t q_;
    std::optional<TruncatedLaw1D> trunc_;
    double radius_ = 0.0;
    Grid1D qgrid_;
    std::vector<double> qweights_;
};

}  // namespace martquant
