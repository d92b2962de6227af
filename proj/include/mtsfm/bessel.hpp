// bessel.hpp - ordinary Bessel functions J_n(x) of integer order.
//
// The whole order ladder J_0..J_nmax is evaluated in one Miller-style
// backward recurrence pass, normalized with  1 = J_0 + 2*sum_{k>=1} J_2k.
// A direct power series handles |x| < 1, where the recurrence start order
// would be wasteful. Accuracy is ~1e-14 absolute over the small-argument,
// moderate-order regime used by the GBF evaluators.

#pragma once

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

namespace mtsfm {

namespace detail {

// J_n(x) by its ascending power series; fine for |x| < 1 at any order and
// used as the small-argument fallback.
inline double bessel_j_series(int n, double x) {
    double half = 0.5 * x;
    // (x/2)^n / n!
    double term = 1.0;
    for (int k = 1; k <= n; ++k) term *= half / static_cast<double>(k);
    double sum = term;
    double hh = half * half;
    for (int s = 1; s < 64; ++s) {
        term *= -hh / (static_cast<double>(s) * static_cast<double>(n + s));
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum) + 1e-300) break;
    }
    return sum;
}

inline std::vector<double> bessel_j_ladder_series(int n_max, double x) {
    std::vector<double> out(static_cast<std::size_t>(n_max) + 1);
    for (int n = 0; n <= n_max; ++n) out[static_cast<std::size_t>(n)] = bessel_j_series(n, x);
    return out;
}

}  // namespace detail

// J_0(x)..J_{n_max}(x) for x >= 0.
inline std::vector<double> bessel_j_sequence(int n_max, double x) {
    if (n_max < 0) throw std::invalid_argument("bessel_j_sequence: n_max must be >= 0");
    if (x < 0.0) throw std::invalid_argument("bessel_j_sequence: x must be >= 0");

    std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
    if (x == 0.0) {
        out[0] = 1.0;
        return out;
    }
    if (x < 1.0) return detail::bessel_j_ladder_series(n_max, x);

    // Start far enough above both the requested order and the argument that
    // the downward-recursed trial solution has converged to J.
    int base = std::max(n_max, static_cast<int>(std::ceil(x)));
    int start = base + 15 + static_cast<int>(std::sqrt(40.0 * (base + 1)));

    double jp = 0.0;    // J_{m+1} (trial)
    double jc = 1e-30;  // J_m (trial)
    double norm = 0.0;  // accumulates J_0 + 2*sum J_{2k}
    for (int m = start; m >= 0; --m) {
        double jm = (2.0 * (m + 1) / x) * jc - jp;  // J_m from J_{m+1}, J_{m+2}
        jp = jc;
        jc = jm;
        if (m <= n_max) out[static_cast<std::size_t>(m)] = jc;
        if (m % 2 == 0) norm += (m == 0) ? jc : 2.0 * jc;
        if (std::abs(jc) > 1e250) {  // rescale to dodge overflow
            jp *= 1e-250;
            jc *= 1e-250;
            norm *= 1e-250;
            for (double& v : out) v *= 1e-250;
        }
    }
    for (double& v : out) v /= norm;
    return out;
}

// J_n(x) for any integer order and any sign of x, via
// J_{-n}(x) = (-1)^n J_n(x) and J_n(-x) = (-1)^n J_n(x).
inline double bessel_j(int n, double x) {
    double sign = 1.0;
    if (n < 0) {
        n = -n;
        if (n % 2 != 0) sign = -sign;
    }
    if (x < 0.0) {
        x = -x;
        if (n % 2 != 0) sign = -sign;
    }
    return sign * bessel_j_sequence(n, x)[static_cast<std::size_t>(n)];
}

}  // namespace mtsfm
