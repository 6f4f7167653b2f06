#pragma once

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "martquant/chain.hpp"
#include "martquant/errors.hpp"
#include "martquant/laws.hpp"
#include "martquant/noise.hpp"
#include "martquant/order.hpp"
#include "martquant/rng.hpp"

namespace martquant {

// Mean and batch-means standard error.
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

namespace detail {

// Sums per batch of a fixed number of statistics; folded in batch order.
class BatchAccumulator {
public:
    BatchAccumulator(std::size_t batches, std::size_t stats)
        : b_(batches), s_(stats), sum_(batches * stats, 0.0), count_(batches, 0) {}

    double* slot(std::size_t batch) { return sum_.data() + batch * s_; }
    void count(std::size_t batch) { ++count_[batch]; }

    Estimate estimate(std::size_t stat) const {
        double total = 0.0;
        std::size_t n = 0;
        std::size_t used = 0;
        for (std::size_t b = 0; b < b_; ++b) {
            total += sum_[b * s_ + stat];
            n += count_[b];
            if (count_[b] > 0) ++used;
        }
        Estimate e;
        if (n == 0) return e;
        e.mean = total / static_cast<double>(n);
        if (used < 2) return e;
        double var = 0.0;
        for (std::size_t b = 0; b < b_; ++b) {
            if (count_[b] == 0) continue;
            const double m = sum_[b * s_ + stat] / static_cast<double>(count_[b]);
            var += (m - e.mean) * (m - e.mean);
        }
        var /= static_cast<double>(used - 1);
        e.se = std::sqrt(var / static_cast<double>(used));
        return e;
    }

private:
    std::size_t b_, s_;
    std::vector<double> sum_;
    std::vector<std::size_t> count_;
};

// Runs body(batch, first_path, last_path) over contiguous path blocks, one batch per block.
template <class Body>
void for_each_batch(std::size_t paths, std::size_t batches, unsigned threads, Body&& body) {
    auto range = [&](std::size_t b) {
        return std::pair<std::size_t, std::size_t>{b * paths / batches, (b + 1) * paths / batches};
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(batches)));
    if (threads == 1) {
        for (std::size_t b = 0; b < batches; ++b) {
            auto [lo, hi] = range(b);
            body(b, lo, hi);
        }
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t b = t; b < batches; b += threads) {
                auto [lo, hi] = range(b);
                body(b, lo, hi);
            }
        });
    for (auto& th : pool) th.join();
}

inline double sq_norm(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace detail

// Initial condition for simulation: a 1D law, a fixed point, or a finite distribution.
using X0Sampler = std::variant<AnalyticLaw1D, Point, DiscreteDistribution>;

inline std::size_t x0_dimension(const X0Sampler& x0) {
    if (std::holds_alternative<AnalyticLaw1D>(x0)) return 1;
    if (const auto* p = std::get_if<Point>(&x0)) return p->size();
    return std::get<DiscreteDistribution>(x0).dim();
}

inline void draw_x0(const X0Sampler& x0, CounterRng& rng, std::span<double> out) {
    if (const auto* law = std::get_if<AnalyticLaw1D>(&x0)) {
        out[0] = law->draw(rng);
    } else if (const auto* p = std::get_if<Point>(&x0)) {
        std::copy(p->begin(), p->end(), out.begin());
    } else {
        const auto& dd = std::get<DiscreteDistribution>(x0);
        const double u = rng.uniform();
        double cum = 0.0;
        std::size_t pick = dd.size() - 1;
        for (std::size_t i = 0; i < dd.size(); ++i) {
            cum += dd.weight(i);
            if (u < cum) {
                pick = i;
                break;
            }
        }
        std::copy(dd.point(pick).begin(), dd.point(pick).end(), out.begin());
    }
}

struct CoupledOptions {
    std::size_t paths = 100000;
    std::uint64_t seed = 1;
    std::size_t batches = 30;
    unsigned threads = 1;
    std::size_t store_paths = 0;                // keep the first paths for inspection
    const ChainApproximation* chain = nullptr;  // also simulate the dual-quantized chain
};

// Statistics indexed by k = 0..n (theta statistics by k = 0..n-1).
struct CoupledPathSample {
    std::size_t n = 0, d = 1, q = 1, paths = 0, batches = 0;
    std::uint64_t seed = 0;
    std::vector<Estimate> err_sq;       // E|X_k - Xb_k|^2
    std::vector<Estimate> abs_err;      // E|X_k - Xb_k|
    std::vector<Estimate> runmax_sq;    // E max_{j<=k} |X_j - Xb_j|^2
    std::vector<Estimate> hat_err_sq;   // E|X_k - Xhat_k|^2 (chain only)
    std::vector<Estimate> x_sq;         // E|X_k|^2
    std::vector<Estimate> theta_sq;     // E|||theta_k(X_k)|||^2
    std::vector<Estimate> theta_fr_sq;  // E||theta_k(X_k)||_Fr^2
    // stored paths, row-major (n+1) x d each
    std::vector<std::vector<double>> x, xb, xhat;

    double rms(const std::vector<Estimate>& v, std::size_t k) const { return std::sqrt(v[k].mean); }
};

inline CoupledPathSample simulate_coupled(const ArchSpec& arch, const std::vector<StepNoise>& noise, const X0Sampler& x0,
                                          const CoupledOptions& opt) {
    arch.validate();
    if (opt.paths == 0) throw DomainError("at least one path is required");
    const std::size_t n = arch.steps(), d = arch.d, q = arch.q;
    if (noise.size() != n && noise.size() != 1) throw DimensionMismatch("one noise spec per step (or a single one) is required");
    for (const auto& nz : noise)
        if (nz.dim() != q) throw DimensionMismatch("noise dimension does not match theta");
    if (x0_dimension(x0) != d) throw DimensionMismatch("initial condition has the wrong dimension");
    const ChainApproximation* ch = opt.chain;
    if (ch && (ch->n() != n || ch->dim != d)) throw DimensionMismatch("chain does not match the model");
    if (ch && d > 2) throw OutOfScopeError("unsupported dimension");

    // Chain lookup structures.
    std::optional<Grid1D> vor1;
    std::optional<GridD> vord;
    std::vector<DualGrid1D> dual1;
    std::vector<Triangulation2D> dual2;
    if (ch) {
        if (d == 1) {
            vor1 = Grid1D(detail::as_values(ch->grids[0]));
            for (std::size_t k = 1; k <= n; ++k) dual1.emplace_back(detail::as_values(ch->grids[k]));
        } else {
            vord = GridD(ch->grids[0]);
            for (std::size_t k = 1; k <= n; ++k) {
                std::vector<Vec2> v;
                for (const auto& p : ch->grids[k]) v.push_back({p[0], p[1]});
                dual2.emplace_back(v);
            }
        }
    }

    const std::size_t batches = std::max<std::size_t>(1, std::min(opt.batches, opt.paths));
    // stats layout: 0 err, 1 abs, 2 runmax, 3 hat, 4 xsq  (each n+1), then theta, theta_fr (each n)
    const std::size_t K = n + 1;
    const std::size_t S = 5 * K + 2 * n;
    detail::BatchAccumulator acc(batches, S);

    CoupledPathSample out;
    out.n = n;
    out.d = d;
    out.q = q;
    out.paths = opt.paths;
    out.batches = batches;
    out.seed = opt.seed;
    const std::size_t stored = std::min(opt.store_paths, opt.paths);
    out.x.assign(stored, {});
    out.xb.assign(stored, {});
    if (ch) out.xhat.assign(stored, {});

    detail::for_each_batch(opt.paths, batches, opt.threads, [&](std::size_t b, std::size_t lo, std::size_t hi) {
        std::vector<double> X(K * d), Xb(K * d), Xh(K * d), z(q), zb(q), zh(q), m(d * q), y(d);
        double* s = acc.slot(b);
        for (std::size_t path = lo; path < hi; ++path) {
            CounterRng rng(opt.seed, path);
            draw_x0(x0, rng, std::span<double>(X.data(), d));
            std::copy(X.begin(), X.begin() + static_cast<std::ptrdiff_t>(d), Xb.begin());
            if (ch) {
                const std::size_t idx = d == 1 ? nn_project(*vor1, X[0]) : nn_project(*vord, std::span<const double>(X.data(), d));
                std::copy(ch->grids[0][idx].begin(), ch->grids[0][idx].end(), Xh.begin());
            }
            for (std::size_t k = 0; k < n; ++k) {
                const StepNoise& nz = noise.size() == 1 ? noise.front() : noise[k];
                nz.draw(rng, z);
                const double u = rng.uniform();
                nz.apply(z, zb);
                const Theta& th = arch.theta[k];
                std::span<const double> xk(X.data() + k * d, d), xbk(Xb.data() + k * d, d);
                th.eval(xk, m);
                {
                    const double op = operator_norm(m, d, q);
                    double fr = 0.0;
                    for (double v : m) fr += v * v;
                    s[5 * K + k] += op * op;
                    s[5 * K + n + k] += fr;
                }
                for (std::size_t r = 0; r < d; ++r) {
                    double v = X[k * d + r];
                    for (std::size_t c = 0; c < q; ++c) v += m[r * q + c] * z[c];
                    X[(k + 1) * d + r] = v;
                }
                th.eval(xbk, m);
                for (std::size_t r = 0; r < d; ++r) {
                    double v = Xb[k * d + r];
                    for (std::size_t c = 0; c < q; ++c) v += m[r * q + c] * zb[c];
                    Xb[(k + 1) * d + r] = v;
                }
                if (ch) {
                    ch->effective_noise[k].apply(z, zh);
                    th.eval(std::span<const double>(Xh.data() + k * d, d), m);
                    for (std::size_t r = 0; r < d; ++r) {
                        double v = Xh[k * d + r];
                        for (std::size_t c = 0; c < q; ++c) v += m[r * q + c] * zh[c];
                        y[r] = v;
                    }
                    std::size_t j;
                    if (d == 1) {
                        const auto& g = dual1[k];
                        j = split_randomized(split(g, std::clamp(y[0], g[0], g[g.size() - 1]), 0.0), u);
                    } else {
                        j = split_randomized(split(dual2[k], y, 1e-9), u);
                    }
                    std::copy(ch->grids[k + 1][j].begin(), ch->grids[k + 1][j].end(), Xh.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
                }
            }
            double runmax = 0.0;
            for (std::size_t k = 0; k <= n; ++k) {
                std::span<const double> xk(X.data() + k * d, d), xbk(Xb.data() + k * d, d);
                const double e2 = detail::sq_norm(xk, xbk);
                runmax = std::max(runmax, e2);
                s[k] += e2;
                s[K + k] += std::sqrt(e2);
                s[2 * K + k] += runmax;
                if (ch) s[3 * K + k] += detail::sq_norm(xk, std::span<const double>(Xh.data() + k * d, d));
                double x2 = 0.0;
                for (double v : xk) x2 += v * v;
                s[4 * K + k] += x2;
            }
            acc.count(b);
            if (path < stored) {
                out.x[path] = X;
                out.xb[path] = Xb;
                if (ch) out.xhat[path] = Xh;
            }
        }
    });

    for (std::size_t k = 0; k <= n; ++k) {
        out.err_sq.push_back(acc.estimate(k));
        out.abs_err.push_back(acc.estimate(K + k));
        out.runmax_sq.push_back(acc.estimate(2 * K + k));
        if (ch) out.hat_err_sq.push_back(acc.estimate(3 * K + k));
        out.x_sq.push_back(acc.estimate(4 * K + k));
    }
    for (std::size_t k = 0; k < n; ++k) {
        out.theta_sq.push_back(acc.estimate(5 * K + k));
        out.theta_fr_sq.push_back(acc.estimate(5 * K + n + k));
    }
    return out;
}

// Moment envelope: ||X_k||^2 <= prod_{l<k} (1 + c_fr_l) (E|X_0|^2 + 1) - 1, k = 0..n.
inline std::vector<double> second_moment_envelope(const std::vector<double>& c_fr, double x0_sq) {
    std::vector<double> out{x0_sq};
    double p = 1.0;
    for (double c : c_fr) {
        p *= 1.0 + c;
        out.push_back(p * (x0_sq + 1.0) - 1.0);
    }
    return out;
}

struct TruncationBoundInputs {
    std::vector<double> lip, lip_fr, c, c_fr;  // per step k = 0..n-1
    double noise_second_moment = 1.0;          // E|Z|^2 (q for a standard Gaussian)
    double coord_second_moment = 1.0;          // max_i E (Z^i)^2
    double x0_sq = 0.0;                        // ||X_0||_2^2
    double x0_err_sq = 0.0;                    // ||X_0 - Xb_0||_2^2
    std::vector<double> z_err_sq;              // ||Z_l - Zb_l||_2^2, l = 1..n
    std::vector<double> z_coord_err_sq;        // max_i E (Z^i_l - Zb^i_l)^2, l = 1..n

    std::size_t steps() const { return lip.size(); }

    static TruncationBoundInputs from(const ArchSpec& arch, const std::vector<StepNoise>& noise, double x0_sq, double x0_err_sq = 0.0) {
        TruncationBoundInputs in;
        for (const auto& t : arch.theta) {
            if (!t.constants().declared) throw DomainError("coefficient constants must be declared for the error bounds");
            in.lip.push_back(t.constants().lip);
            in.lip_fr.push_back(t.constants().lip_fr);
            in.c.push_back(t.constants().c);
            in.c_fr.push_back(t.constants().c_fr);
        }
        for (std::size_t k = 0; k < arch.steps(); ++k) {
            const StepNoise& nz = noise.size() == 1 ? noise.front() : noise[k];
            in.z_err_sq.push_back(nz.error_sq());
            in.z_coord_err_sq.push_back(nz.coordinate_error_sq());
        }
        const StepNoise& nz0 = noise.front();
        in.noise_second_moment = nz0.second_moment();
        in.coord_second_moment = nz0.base().second_moment();
        in.x0_sq = x0_sq;
        in.x0_err_sq = x0_err_sq;
        return in;
    }
};

// Squared-error bounds for k = 0..n.
struct TruncationBound {
    std::vector<double> refined;    // sum form
    std::vector<double> product;    // product form
    std::vector<double> frobenius;  // diagonal-covariance variant of the sum form
    std::vector<double> doob;       // 4 * refined: bound on E max_{j<=k} |X_j - Xb_j|^2
};

inline TruncationBound truncation_error_bound(const TruncationBoundInputs& in) {
    const std::size_t n = in.steps();
    if (in.lip_fr.size() != n || in.c.size() != n || in.c_fr.size() != n || in.z_err_sq.size() != n)
        throw DimensionMismatch("bound inputs need one entry per step");
    const bool fr = in.z_coord_err_sq.size() == n;
    const double m2 = in.noise_second_moment;
    auto sum_form = [&](std::size_t k, bool frob) {
        auto growth = [&](std::size_t i) {
            return frob ? 1.0 + in.lip_fr[i] * in.lip_fr[i] * in.coord_second_moment : 1.0 + m2 * in.lip[i] * in.lip[i];
        };
        double head = in.x0_err_sq;
        for (std::size_t i = 0; i < k; ++i) head *= growth(i);
        double tail = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            double w = 1.0;
            for (std::size_t i = l + 1; i < k; ++i) w *= growth(i);
            for (std::size_t i = 0; i < l; ++i) w *= 1.0 + in.c_fr[i];
            tail += w * (frob ? in.c_fr[l] * in.z_coord_err_sq[l] : in.c[l] * in.z_err_sq[l]);
        }
        return head + (1.0 + in.x0_sq) * tail;
    };
    TruncationBound b;
    for (std::size_t k = 0; k <= n; ++k) {
        b.refined.push_back(sum_form(k, false));
        if (fr) b.frobenius.push_back(sum_form(k, true));
        double head = in.x0_err_sq, prod = 1.0, sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            head *= 1.0 + m2 * in.lip[i] * in.lip[i];
            prod *= 1.0 + std::max(m2 * in.lip[i] * in.lip[i], in.c_fr[i]);
            sum += in.c[i] * in.z_err_sq[i];
        }
        b.product.push_back(head + (1.0 + in.x0_sq) * prod * sum);
        b.doob.push_back(4.0 * b.refined.back());
    }
    return b;
}

// Continuous-time constants of an Euler scheme theta_k = sqrt(T/n) theta(t_k, .).
struct EulerConstants {
    double horizon = 1.0;
    std::size_t n = 1;
    std::size_t q = 1;
    double lip = 0.0, c = 0.0, c_fr = 0.0;
    double x0_sq = 0.0, x0_err_sq = 0.0;
    double tail = 0.0;  // E|Z_1|^2 1{|Z_1| >= a}

    double h() const { return horizon / static_cast<double>(n); }
    double C() const { return std::max(static_cast<double>(q) * lip * lip, c_fr); }
};

struct EulerTruncationDisplay {
    std::vector<double> discrete;     // (1 + q h L^2)^k and (1 + h C)^k factors
    std::vector<double> exponential;  // e^{q L^2 t_k} and e^{C t_k} envelopes
    double doob = 0.0;                // bound on E max_k |X_k - Xb_k|^2
};

inline EulerTruncationDisplay euler_truncation_bound(const EulerConstants& e) {
    EulerTruncationDisplay out;
    const double h = e.h(), q = static_cast<double>(e.q), L2 = e.lip * e.lip, C = e.C();
    for (std::size_t k = 0; k <= e.n; ++k) {
        const double kk = static_cast<double>(k), tk = kk * h;
        out.discrete.push_back(e.x0_err_sq * std::pow(1.0 + q * h * L2, kk) +
                               (1.0 + e.x0_sq) * std::pow(1.0 + h * C, kk) * h * e.c * kk * e.tail);
        out.exponential.push_back(e.x0_err_sq * std::exp(q * L2 * tk) + (1.0 + e.x0_sq) * std::exp(C * tk) * e.c * tk * e.tail);
    }
    const double T = e.horizon;
    out.doob = 4.0 * e.x0_err_sq * std::exp(q * L2 * T) + 4.0 * T * (1.0 + e.x0_sq) * std::exp(C * T) * e.c * e.tail;
    return out;
}

// E|Z|^2 1{|Z| >= a} for Z ~ N(0, I_q).
inline double gaussian_tail_exact(double a, std::size_t q) {
    if (!(a >= 0.0)) throw DomainError("truncation radius must be nonnegative");
    const double qd = static_cast<double>(q);
    return qd * boost::math::gamma_q(qd / 2.0 + 1.0, a * a / 2.0);
}

// Closed-form upper bounds for the Gaussian tail second moment.
inline double gaussian_tail_bound(double a, std::size_t q) {
    if (q == 0) throw DomainError("noise dimension must be positive");
    if (!(a > 0.0)) throw DomainError("truncation radius must be positive");
    if (std::isinf(a)) return 0.0;
    if (q == 1) return std::sqrt(2.0 / M_PI) * (a + 1.0 / a) * std::exp(-a * a / 2.0);
    const double qd = static_cast<double>(q);
    if (!(a > std::sqrt(qd + 2.0))) throw DomainError("tail bound for q >= 2 needs a > sqrt(q + 2)");
    // log form avoids overflow for large a
    const double lg = -a * a / 2.0 + (1.0 + qd / 2.0) * std::log(std::exp(1.0) * a * a / (qd + 2.0));
    return qd * std::exp(lg);
}

// a_n = sqrt(c log n), kept above sqrt(q + 2) when q >= 2.
inline double select_truncation(double n, double c, std::size_t q = 1) {
    if (!(n >= 2.0)) throw DomainError("select_truncation needs n >= 2");
    if (!(c > 0.0)) throw DomainError("select_truncation needs c > 0");
    const double a = std::sqrt(c * std::log(n));
    if (q >= 2) return std::max(a, std::sqrt(static_cast<double>(q) + 2.0) + 1e-9);
    return a;
}

struct InnovationBoundInputs {
    std::vector<double> lip;        // per step k = 0..n-1
    double noise_second_moment = 1.0;
    double x0_err_sq = 0.0;         // ||Xhat_0 - X_0||^2
    std::vector<double> theta_sq;   // ||theta_{l-1}(X_{l-1})||^2, l = 1..n
    std::vector<double> z_err_sq;   // ||Z_l - Zb_l||^2, l = 1..n
    std::vector<double> dual_sq;    // ||Xhat_l - Xtilde_l||^2, l = 1..n
};

// Squared bound on ||Xhat_k - X_k||_2^2 for k = 0..n.
inline std::vector<double> quantized_innovation_bound(const InnovationBoundInputs& in) {
    const std::size_t n = in.lip.size();
    if (in.theta_sq.size() != n || in.z_err_sq.size() != n || in.dual_sq.size() != n)
        throw DimensionMismatch("bound inputs need one entry per step");
    std::vector<double> out;
    for (std::size_t k = 0; k <= n; ++k) {
        auto g = [&](std::size_t i) { return 1.0 + in.noise_second_moment * in.lip[i - 1] * in.lip[i - 1]; };
        double head = in.x0_err_sq;
        for (std::size_t i = 1; i <= k; ++i) head *= g(i);
        double tail = 0.0;
        for (std::size_t l = 1; l <= k; ++l) {
            double w = 1.0;
            for (std::size_t i = l + 1; i <= k; ++i) w *= g(i);
            tail += w * (in.theta_sq[l - 1] * in.z_err_sq[l - 1] + in.dual_sq[l - 1]);
        }
        out.push_back(head + tail);
    }
    return out;
}

// Inputs for the rate form with user-supplied quantization constants.
struct EulerQuantizedInputs {
    double horizon = 1.0;
    std::size_t n = 1, d = 1, q = 1;
    double lip = 0.0;
    double c_vor_d = 0.0, c_vor_q = 0.0, c_del = 0.0;  // user constants
    double sigma_x0 = 0.0;
    std::size_t n0 = 1;
    std::vector<double> sigma_z;      // l = 1..n
    std::vector<std::size_t> nz;      // l = 1..n
    std::vector<double> sigma_tilde;  // l = 1..n, estimated from the chain
    std::vector<std::size_t> nk;      // l = 1..n
    std::vector<double> theta_sq;     // ||theta(t_{l-1}, X_{l-1})||^2, l = 1..n (continuous coefficient)
};

// ||Xhat_k - X_k||_2 bound (not squared) for k = 0..n.
inline std::vector<double> euler_quantized_bound(const EulerQuantizedInputs& in) {
    if (in.sigma_z.size() != in.n || in.nz.size() != in.n || in.sigma_tilde.size() != in.n || in.nk.size() != in.n ||
        in.theta_sq.size() != in.n)
        throw DimensionMismatch("bound inputs need one entry per step");
    const double h = in.horizon / static_cast<double>(in.n), q = static_cast<double>(in.q), d = static_cast<double>(in.d);
    const double L2 = in.lip * in.lip;
    std::vector<double> out;
    for (std::size_t k = 0; k <= in.n; ++k) {
        const double tk = static_cast<double>(k) * h;
        double s = in.c_vor_d * in.c_vor_d * std::exp(q * tk * L2) * in.sigma_x0 * in.sigma_x0 /
                   std::pow(static_cast<double>(in.n0), 2.0 / d);
        for (std::size_t l = 1; l <= k; ++l) {
            const double tl = static_cast<double>(l) * h;
            const double zterm = h * in.theta_sq[l - 1] * in.c_vor_q * in.c_vor_q * in.sigma_z[l - 1] * in.sigma_z[l - 1] /
                                 std::pow(static_cast<double>(in.nz[l - 1]), 2.0 / q);
            const double dterm = in.c_del * in.c_del * in.sigma_tilde[l - 1] * in.sigma_tilde[l - 1] /
                                 std::pow(static_cast<double>(in.nk[l - 1]), 2.0 / d);
            s += std::exp(q * (tk - tl) * L2) * (zterm + dterm);
        }
        out.push_back(std::sqrt(s));
    }
    return out;
}

// ||theta(t_k, X_k)||^2 <= c e^{c_fr t_k} (1 + ||X_0||^2)
inline double euler_theta_envelope(double c, double c_fr, double tk, double x0_sq) {
    return c * std::exp(c_fr * tk) * (1.0 + x0_sq);
}

// sigma_p(X) = inf_a ||X - a||_p, coordinatewise golden-section minimization.
inline double pseudo_std(const DiscreteDistribution& mu, double p) {
    if (!(p >= 1.0)) throw DomainError("pseudo standard deviation needs p >= 1");
    const std::size_t d = mu.dim();
    Point a = mu.mean();
    auto f = [&](const Point& c) {
        double s = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            if (mu.weight(i) == 0.0) continue;
            s += mu.weight(i) * std::pow(squared_distance(mu.point(i), c), p / 2.0);
        }
        return s;
    };
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int sweep = 0; sweep < (d == 1 ? 1 : 50); ++sweep) {
        for (std::size_t c = 0; c < d; ++c) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t i = 0; i < mu.size(); ++i) {
                lo = std::min(lo, mu.point(i)[c]);
                hi = std::max(hi, mu.point(i)[c]);
            }
            Point t = a;
            for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++it) {
                const double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
                t[c] = x1;
                const double f1 = f(t);
                t[c] = x2;
                const double f2 = f(t);
                if (f1 <= f2) hi = x2; else lo = x1;
            }
            a[c] = 0.5 * (lo + hi);
        }
    }
    return std::pow(f(a), 1.0 / p);
}

// sigma_{2+eta}(N(0, I_q)) = ||Z||_{2+eta}.
inline double gaussian_pseudo_std(std::size_t q, double eta) {
    const double qd = static_cast<double>(q), p = 2.0 + eta;
    const double lm = (p / 2.0) * std::log(2.0) + std::lgamma((qd + p) / 2.0) - std::lgamma(qd / 2.0);
    return std::exp(lm / p);
}

// Convex functionals of a one-dimensional path x_0..x_n.
struct PathFunctional {
    std::string name;
    std::function<double(std::span<const double>)> f;
};

inline std::vector<PathFunctional> standard_path_battery(double x0 = 0.0, double scale = 1.0) {
    auto pos = [](double v) { return v > 0.0 ? v : 0.0; };
    auto mx = [](std::span<const double> x) { return *std::max_element(x.begin(), x.end()); };
    auto mn = [](std::span<const double> x) { return *std::min_element(x.begin(), x.end()); };
    auto avg = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v;
        return s / static_cast<double>(x.size());
    };
    std::vector<PathFunctional> b;
    for (double k : {0.0, 0.5, 1.0}) {
        const double K = x0 + k * scale;
        b.push_back({"max_call_" + std::to_string(k), [=](std::span<const double> x) { return pos(mx(x) - K); }});
    }
    for (double k : {0.0, -0.5}) {
        const double K = x0 + k * scale;
        b.push_back({"min_put_" + std::to_string(k), [=](std::span<const double> x) { return pos(K - mn(x)); }});
    }
    for (double k : {-0.5, 0.0, 0.5}) {
        const double K = x0 + k * scale;
        b.push_back({"call_" + std::to_string(k), [=](std::span<const double> x) { return pos(x.back() - K); }});
    }
    for (double k : {0.0, 0.5}) {
        const double K = x0 + k * scale;
        b.push_back({"put_" + std::to_string(k), [=](std::span<const double> x) { return pos(K - x.back()); }});
    }
    for (double k : {0.0, 0.3}) {
        const double K = x0 + k * scale;
        b.push_back({"asian_call_" + std::to_string(k), [=](std::span<const double> x) { return pos(avg(x) - K); }});
    }
    b.push_back({"asian_put", [=](std::span<const double> x) { return pos(x0 - avg(x)); }});
    b.push_back({"range", [=](std::span<const double> x) { return mx(x) - mn(x); }});
    b.push_back({"abs_move", [](std::span<const double> x) { return std::abs(x.back() - x.front()); }});
    b.push_back({"sq_move", [](std::span<const double> x) { return (x.back() - x.front()) * (x.back() - x.front()); }});
    b.push_back({"variation", [](std::span<const double> x) {
                     double s = 0.0;
                     for (std::size_t k = 1; k < x.size(); ++k) s += std::abs(x[k] - x[k - 1]);
                     return s;
                 }});
    b.push_back({"max_abs", [](std::span<const double> x) {
                     double s = 0.0;
                     for (double v : x) s = std::max(s, std::abs(v));
                     return s;
                 }});
    b.push_back({"energy", [](std::span<const double> x) {
                     double s = 0.0;
                     for (double v : x) s += v * v;
                     return s;
                 }});
    b.push_back({"forward_start", [=](std::span<const double> x) {
                     return x.size() < 2 ? 0.0 : pos(x.back() - x[x.size() - 2] - 0.1 * scale);
                 }});
    return b;
}

struct DominationRow {
    std::string name;
    Estimate approx;  // E phi(Xb_{0:n})
    Estimate exact;   // E phi(X_{0:n})
    Estimate diff;    // E [phi(Xb) - phi(X)], paired
    bool pass = false;
};

struct DominationReport {
    std::size_t paths = 0;
    std::vector<DominationRow> rows;
    bool all_pass() const {
        return std::all_of(rows.begin(), rows.end(), [](const DominationRow& r) { return r.pass; });
    }
};

// Statistical check of E phi(Xb) <= E phi(X) + 3 SE with common random numbers.
inline DominationReport domination_test(const ArchSpec& arch, const StepNoise& noise, const X0Sampler& x0,
                                        const std::vector<PathFunctional>& battery, const CoupledOptions& opt) {
    arch.validate();
    if (arch.d != 1 || arch.q != 1) throw OutOfScopeError("path batteries are one-dimensional");
    if (x0_dimension(x0) != 1) throw DimensionMismatch("initial condition has the wrong dimension");
    if (opt.paths == 0) throw DomainError("at least one path is required");
    const std::size_t n = arch.steps(), F = battery.size();
    const std::size_t batches = std::max<std::size_t>(1, std::min(opt.batches, opt.paths));
    detail::BatchAccumulator acc(batches, 3 * F);
    detail::for_each_batch(opt.paths, batches, opt.threads, [&](std::size_t b, std::size_t lo, std::size_t hi) {
        std::vector<double> X(n + 1), Xb(n + 1);
        double z = 0.0, zb = 0.0;
        double* s = acc.slot(b);
        for (std::size_t path = lo; path < hi; ++path) {
            CounterRng rng(opt.seed, path);
            draw_x0(x0, rng, std::span<double>(X.data(), 1));
            Xb[0] = X[0];
            for (std::size_t k = 0; k < n; ++k) {
                noise.draw(rng, std::span<double>(&z, 1));
                noise.apply(std::span<const double>(&z, 1), std::span<double>(&zb, 1));
                X[k + 1] = X[k] + arch.theta[k].scalar_value(X[k]) * z;
                Xb[k + 1] = Xb[k] + arch.theta[k].scalar_value(Xb[k]) * zb;
            }
            for (std::size_t f = 0; f < F; ++f) {
                const double a = battery[f].f(Xb), e = battery[f].f(X);
                s[f] += a;
                s[F + f] += e;
                s[2 * F + f] += a - e;
            }
            acc.count(b);
        }
    });
    DominationReport rep;
    rep.paths = opt.paths;
    for (std::size_t f = 0; f < F; ++f) {
        DominationRow r;
        r.name = battery[f].name;
        r.approx = acc.estimate(f);
        r.exact = acc.estimate(F + f);
        r.diff = acc.estimate(2 * F + f);
        r.pass = r.diff.mean <= 3.0 * r.diff.se;
        rep.rows.push_back(std::move(r));
    }
    return rep;
}

}  // namespace martquant
