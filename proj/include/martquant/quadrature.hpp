#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <limits>
#include <string>

#include "martquant/errors.hpp"

namespace martquant {

struct QuadratureOptions {
    double tol = 1e-12;          // relative
    double abs_floor = 1e-15;    // accepted absolute error when the integral is ~0
    unsigned max_depth = 20;
};

// Adaptive Gauss-Kronrod (15 points). Infinite endpoints are allowed.
template <class F>
double integrate(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
    if (a == b) return 0.0;
    double err = 0.0;
    double l1 = 0.0;
    const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, a, b, opt.max_depth, opt.tol, &err, &l1);
    if (!std::isfinite(value) || err > std::max(opt.tol * 10.0 * l1, opt.abs_floor)) {
        throw QuadratureError("adaptive quadrature failed on [" + std::to_string(a) + ", " +
                              std::to_string(b) + "], error estimate " + std::to_string(err));
    }
    return value;
}

// Tanh-sinh; used for integrands with endpoint singularities (e.g. quantile functions).
template <class F>
double integrate_singular(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
    if (a == b) return 0.0;
    boost::math::quadrature::tanh_sinh<double> ts(15);
    double err = 0.0;
    double l1 = 0.0;
    const double value = ts.integrate(f, a, b, opt.tol, &err, &l1);
    // err is the gap between the last two levels; the final level's error is roughly
    // its square (relative to l1), so sqrt(tol) on the gap means tol on the result.
    if (!std::isfinite(value) || err > std::max(std::sqrt(opt.tol) * l1, opt.abs_floor)) {
        throw QuadratureError("tanh-sinh quadrature failed, error estimate " +
                              std::to_string(err));
    }
    return value;
}

}  // namespace martquant
