#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "martquant/errors.hpp"

namespace martquant {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterLimit };
enum class Sense { Minimize, Maximize };
// Hybrid: largest-coefficient pricing, switching to Bland's rule after a run of
// degenerate pivots and back after the next strict improvement.
enum class PivotRule { Hybrid, Bland, Dantzig };

inline const char* to_string(LpStatus s) {
    switch (s) {
        case LpStatus::Optimal: return "Optimal";
        case LpStatus::Infeasible: return "Infeasible";
        case LpStatus::Unbounded: return "Unbounded";
        case LpStatus::IterLimit: return "IterLimit";
    }
    return "?";
}

// Standard form: optimize c'x subject to A x = b, x >= 0.
class LinearProgram {
public:
    LinearProgram(std::size_t rows, std::size_t cols, Sense sense = Sense::Minimize)
        : m_(rows), n_(cols), sense_(sense), c_(cols, 0.0), a_(rows * cols, 0.0), b_(rows, 0.0) {}

    std::size_t rows() const { return m_; }
    std::size_t cols() const { return n_; }
    Sense sense() const { return sense_; }
    void set_sense(Sense s) { sense_ = s; }

    double& objective(std::size_t j) { return c_[j]; }
    double objective(std::size_t j) const { return c_[j]; }
    double& coeff(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
    double coeff(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
    double& rhs(std::size_t i) { return b_[i]; }
    double rhs(std::size_t i) const { return b_[i]; }

    const std::vector<double>& objective_vector() const { return c_; }
    const std::vector<double>& matrix() const { return a_; }
    const std::vector<double>& rhs_vector() const { return b_; }

    void validate() const {
        for (double v : c_)
            if (!std::isfinite(v)) throw DomainError("LP objective has a non-finite entry");
        for (double v : a_)
            if (!std::isfinite(v)) throw DomainError("LP matrix has a non-finite entry");
        for (double v : b_)
            if (!std::isfinite(v)) throw DomainError("LP rhs has a non-finite entry");
    }

private:
    std::size_t m_, n_;
    Sense sense_;
    std::vector<double> c_, a_, b_;
};

struct LpOptions {
    std::size_t max_iter = 2000000;
    double pivot_tol = 1e-9;
    double feas_tol = 1e-8;
    double cost_tol = 1e-11;
    PivotRule rule = PivotRule::Hybrid;
    std::size_t degenerate_run = 50;
};

struct LpSolution {
    LpStatus status = LpStatus::IterLimit;
    std::vector<double> x;
    double objective = 0.0;
    std::vector<double> duals;   // y with c - A'y >= 0 (minimization convention of the given sense)
    std::vector<double> farkas;  // when infeasible: y'A <= 0, y'b > 0
    std::size_t iterations = 0;
    double primal_residual = 0.0;
    double complementary_slackness = 0.0;
};

namespace detail {

class Tableau {
public:
    Tableau(std::size_t m, std::size_t n) : m_(m), n_(n), w_(n + m + 1), t_((m + 1) * (n + m + 1), 0.0) {}
    double& at(std::size_t i, std::size_t j) { return t_[i * w_ + j]; }
    double at(std::size_t i, std::size_t j) const { return t_[i * w_ + j]; }
    double* row(std::size_t i) { return t_.data() + i * w_; }
    std::size_t width() const { return w_; }
    std::size_t rhs_col() const { return w_ - 1; }

    void pivot(std::size_t r, std::size_t c) {
        double* pr = row(r);
        const double inv = 1.0 / pr[c];
        for (std::size_t j = 0; j < w_; ++j) pr[j] *= inv;
        pr[c] = 1.0;
        for (std::size_t i = 0; i <= m_; ++i) {
            if (i == r) continue;
            double* pi = row(i);
            const double f = pi[c];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < w_; ++j) pi[j] -= f * pr[j];
            pi[c] = 0.0;
        }
    }

private:
    std::size_t m_, n_, w_;
    std::vector<double> t_;
};

}  // namespace detail

inline LpSolution solve(const LinearProgram& lp, const LpOptions& opt = {}) {
    lp.validate();
    const std::size_t m = lp.rows(), n = lp.cols();
    const double sgn = lp.sense() == Sense::Maximize ? -1.0 : 1.0;
    LpSolution sol;
    sol.x.assign(n, 0.0);
    sol.duals.assign(m, 0.0);

    std::vector<double> flip(m, 1.0);
    detail::Tableau T(m, n);
    const std::size_t rc = T.rhs_col();
    double bnorm = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (lp.rhs(i) < 0.0) flip[i] = -1.0;
        for (std::size_t j = 0; j < n; ++j) T.at(i, j) = flip[i] * lp.coeff(i, j);
        T.at(i, n + i) = 1.0;
        T.at(i, rc) = flip[i] * lp.rhs(i);
        bnorm = std::max(bnorm, std::abs(lp.rhs(i)));
    }
    std::vector<std::size_t> basis(m);
    for (std::size_t i = 0; i < m; ++i) basis[i] = n + i;

    // Phase 1 objective: sum of artificials.
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += T.at(i, j);
        T.at(m, j) = -s;
    }
    {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += T.at(i, rc);
        T.at(m, rc) = -s;
    }

    auto run = [&](std::size_t entering_limit) -> LpStatus {
        std::size_t degenerate = 0;
        while (true) {
            if (sol.iterations >= opt.max_iter) return LpStatus::IterLimit;
            const double* obj = T.row(m);
            std::size_t enter = entering_limit;
            const bool bland = opt.rule == PivotRule::Bland ||
                               (opt.rule == PivotRule::Hybrid && degenerate >= opt.degenerate_run);
            if (bland) {
                for (std::size_t j = 0; j < entering_limit; ++j)
                    if (obj[j] < -opt.cost_tol) {
                        enter = j;
                        break;
                    }
            } else {
                double most = -opt.cost_tol;
                for (std::size_t j = 0; j < entering_limit; ++j)
                    if (obj[j] < most) {
                        most = obj[j];
                        enter = j;
                    }
            }
            if (enter == entering_limit) return LpStatus::Optimal;
            std::size_t leave = m;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < m; ++i) {
                const double a = T.at(i, enter);
                if (a <= opt.pivot_tol) continue;
                const double ratio = std::max(T.at(i, rc), 0.0) / a;
                const double eps = 1e-14 * (1.0 + std::abs(ratio));
                if (leave == m || ratio < best - eps) {
                    best = ratio;
                    leave = i;
                } else if (ratio <= best + eps && basis[i] < basis[leave]) {
                    best = std::min(best, ratio);
                    leave = i;
                }
            }
            if (leave == m) return LpStatus::Unbounded;
            if (best > 0.0)
                degenerate = 0;
            else
                ++degenerate;
            T.pivot(leave, enter);
            basis[leave] = enter;
            ++sol.iterations;
        }
    };

    LpStatus st = run(n + m);
    if (st == LpStatus::IterLimit) {
        sol.status = st;
        return sol;
    }
    const double infeas = -T.at(m, rc);
    if (infeas > opt.feas_tol * std::max(1.0, bnorm)) {
        sol.status = LpStatus::Infeasible;
        sol.farkas.resize(m);
        for (std::size_t i = 0; i < m; ++i) sol.farkas[i] = flip[i] * (1.0 - T.at(m, n + i));
        return sol;
    }
    // Drive zero-level artificials out of the basis where possible.
    for (std::size_t i = 0; i < m; ++i) {
        if (basis[i] < n) continue;
        std::size_t best = n;
        double mag = opt.pivot_tol;
        for (std::size_t j = 0; j < n; ++j)
            if (std::abs(T.at(i, j)) > mag) {
                mag = std::abs(T.at(i, j));
                best = j;
            }
        if (best < n) {
            T.pivot(i, best);
            basis[i] = best;
        }
    }
    // Phase 2 reduced costs.
    for (std::size_t j = 0; j < T.width(); ++j) {
        double s = j < n ? sgn * lp.objective(j) : 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double cb = basis[i] < n ? sgn * lp.objective(basis[i]) : 0.0;
            if (cb != 0.0) s -= cb * T.at(i, j);
        }
        T.at(m, j) = s;
    }
    {
        double z = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            if (basis[i] < n) z += sgn * lp.objective(basis[i]) * T.at(i, rc);
        T.at(m, rc) = -z;
    }
    st = run(n);
    sol.status = st;
    if (st != LpStatus::Optimal) return sol;

    for (std::size_t i = 0; i < m; ++i)
        if (basis[i] < n) sol.x[basis[i]] = T.at(i, rc);
    // One step of iterative refinement using B^{-1} from the artificial columns.
    std::vector<double> r(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = flip[i] * lp.rhs(i);
        for (std::size_t j = 0; j < n; ++j)
            if (sol.x[j] != 0.0) s -= flip[i] * lp.coeff(i, j) * sol.x[j];
        r[i] = s;
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (basis[i] >= n) continue;
        double d = 0.0;
        for (std::size_t k = 0; k < m; ++k) d += T.at(i, n + k) * r[k];
        sol.x[basis[i]] = std::max(0.0, sol.x[basis[i]] + d);
    }
    for (std::size_t i = 0; i < m; ++i) sol.duals[i] = flip[i] * sgn * (-T.at(m, n + i));

    double obj = 0.0;
    for (std::size_t j = 0; j < n; ++j) obj += lp.objective(j) * sol.x[j];
    sol.objective = obj;
    for (std::size_t i = 0; i < m; ++i) {
        double s = -lp.rhs(i);
        for (std::size_t j = 0; j < n; ++j) s += lp.coeff(i, j) * sol.x[j];
        sol.primal_residual = std::max(sol.primal_residual, std::abs(s));
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (sol.x[j] == 0.0) continue;
        double red = lp.objective(j);
        for (std::size_t i = 0; i < m; ++i) red -= sol.duals[i] * lp.coeff(i, j);
        sol.complementary_slackness = std::max(sol.complementary_slackness, std::abs(sol.x[j] * red));
    }
    return sol;
}

// Text export in the common LP file layout (objective, ST, BOUNDS, END).
inline void write_lp_file(const LinearProgram& lp, std::ostream& os) {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto emit_terms = [&](auto coeff_of, std::size_t count) {
        std::size_t written = 0;
        for (std::size_t j = 0; j < count; ++j) {
            const double v = coeff_of(j);
            if (v == 0.0) continue;
            if (written > 0 && written % 6 == 0) os << "\n   ";
            os << (v < 0.0 ? " - " : (written == 0 ? " " : " + ")) << num(std::abs(v)) << " x" << j;
            ++written;
        }
        if (written == 0) os << " 0 x0";
    };
    os << (lp.sense() == Sense::Minimize ? "Minimize\n" : "Maximize\n");
    os << " obj:";
    emit_terms([&](std::size_t j) { return lp.objective(j); }, lp.cols());
    os << "\nST\n";
    for (std::size_t i = 0; i < lp.rows(); ++i) {
        os << " c" << i << ":";
        emit_terms([&](std::size_t j) { return lp.coeff(i, j); }, lp.cols());
        os << " = " << num(lp.rhs(i)) << "\n";
    }
    os << "BOUNDS\n";
    for (std::size_t j = 0; j < lp.cols(); ++j) os << " x" << j << " >= 0\n";
    os << "END\n";
}

}  // namespace martquant
