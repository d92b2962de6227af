// gbf.hpp - K-dimensional cylindrical Generalized Bessel Function
// coefficients c_l, i.e. the complex Fourier-series coefficients of the
// unit-modulus phase factor exp(j*phi(t)) on [-T/2, T/2].
//
// Two independent evaluators:
//   gbf_via_fft          - production path; one length-M DFT of sampled
//                          exp(j*phi), O(M log M) regardless of K.
//   gbf_via_convolution  - oracle; sequential convolution of per-harmonic
//                          ordinary-Bessel ladders (Jacobi-Anger per tone,
//                          harmonic k contributing at order spacing k).
//                          Combinatorial in K, supported for K <= 8.
//
// Odd-symmetry branch: exp(-j*beta*cos(k theta)) expands with per-order
// factors (-j)^m J_m(beta); the FFT and convolution paths are required to
// agree, which pins this convention.

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtsfm/bessel.hpp"
#include "mtsfm/core.hpp"
#include "mtsfm/fft.hpp"
#include "mtsfm/synthesis.hpp"

namespace mtsfm {

// Carson-style order bound: the coefficient mass lives within
// |l| <= sum_k k*|index_k| plus a small guard band.
inline double carson_sum(const std::vector<double>& indices) {
    double s = 0.0;
    for (std::size_t i = 0; i < indices.size(); ++i)
        s += static_cast<double>(i + 1) * std::abs(indices[i]);
    return s;
}

// Minimum order that avoids truncation risk.
inline int min_safe_order(const std::vector<double>& indices) {
    return static_cast<int>(std::ceil(carson_sum(indices))) + 8;
}

// Carson-plus-margin starting guess for the retained order. High harmonics
// with small indices still reach orders near 3k..4k through their J_2, J_3
// sidelines, so this is a floor, not a guarantee: gbf_via_fft extends it
// until the measured truncation tail drops below target_truncation_tail.
inline int default_max_order(const std::vector<double>& indices) {
    const double s = carson_sum(indices);
    const int margin = std::max(8, static_cast<int>(std::ceil(0.1 * s)));
    return static_cast<int>(std::ceil(s)) + margin;
}

inline constexpr double target_truncation_tail = 1e-9;

namespace detail {

inline double sum_sq(const std::vector<cplx>& v) {
    KahanSum acc;
    for (const cplx& c : v) acc.add(std::norm(c));
    return acc.sum;
}

// (-j)^m for any integer m.
inline cplx minus_j_pow(int m) {
    switch (((m % 4) + 4) % 4) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, -1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, 1.0};
    }
}

struct OrderSeries {
    int min_order = 0;
    std::vector<cplx> v;
    int max_order() const { return min_order + static_cast<int>(v.size()) - 1; }
};

inline OrderSeries convolve(const OrderSeries& a, const OrderSeries& b) {
    OrderSeries out;
    out.min_order = a.min_order + b.min_order;
    out.v.assign(a.v.size() + b.v.size() - 1, cplx{0.0, 0.0});
    for (std::size_t i = 0; i < a.v.size(); ++i)
        for (std::size_t j = 0; j < b.v.size(); ++j)
            out.v[i + j] += a.v[i] * b.v[j];
    return out;
}

}  // namespace detail

// Nested-sum GBF through sequential convolution; exact up to the
// per-dimension ladder truncation at |J_m| < 1e-14. Oracle-scale only.
inline GbfCoefficients gbf_via_convolution(const std::vector<double>& indices,
                                           Symmetry symmetry, int max_order = -1) {
    if (indices.empty())
        throw std::invalid_argument("gbf_via_convolution: need at least one index");
    if (indices.size() > 8)
        throw std::invalid_argument(
            "gbf_via_convolution: oracle supports K <= 8 (got K = " +
            std::to_string(indices.size()) + ")");

    constexpr double ladder_cut = 1e-14;
    detail::OrderSeries acc;
    acc.min_order = 0;
    acc.v = {cplx{1.0, 0.0}};

    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int k = static_cast<int>(i + 1);
        const double x = std::abs(indices[i]);
        const bool neg = indices[i] < 0.0;

        // per-dimension ladder, truncated where |J_m| drops below the cut
        int cap = static_cast<int>(std::ceil(x)) + 40;
        std::vector<double> ladder = bessel_j_sequence(cap, x);
        int m_hi = 0;
        for (int m = cap; m >= 0; --m) {
            if (std::abs(ladder[static_cast<std::size_t>(m)]) >= ladder_cut) {
                m_hi = m;
                break;
            }
        }

        // orders m in [-m_hi, m_hi] at spacing k
        detail::OrderSeries tone;
        tone.min_order = -m_hi * k;
        tone.v.assign(static_cast<std::size_t>(2 * m_hi) * k + 1, cplx{0.0, 0.0});
        for (int m = -m_hi; m <= m_hi; ++m) {
            double jm = ladder[static_cast<std::size_t>(std::abs(m))];
            // J_{-m}(x) = (-1)^m J_m(x) and J_m(-x) = (-1)^m J_m(x); both may apply
            if (m % 2 != 0 && ((m < 0) != neg)) jm = -jm;
            cplx val = (symmetry == Symmetry::Even) ? cplx{jm, 0.0}
                                                    : detail::minus_j_pow(m) * jm;
            tone.v[static_cast<std::size_t>((m + m_hi) * k)] = val;
        }
        acc = detail::convolve(acc, tone);
    }

    // default: keep the whole convolution support (exact oracle semantics)
    if (max_order < 0) max_order = std::max(std::abs(acc.min_order), std::abs(acc.max_order()));

    GbfCoefficients out;
    out.min_order = -max_order;
    out.max_order = max_order;
    out.values.assign(static_cast<std::size_t>(2 * max_order) + 1, cplx{0.0, 0.0});
    for (int l = -max_order; l <= max_order; ++l) {
        if (l < acc.min_order || l > acc.max_order()) continue;
        out.values[static_cast<std::size_t>(l + max_order)] =
            acc.v[static_cast<std::size_t>(l - acc.min_order)];
    }
    out.truncation_tail = std::max(0.0, 1.0 - detail::sum_sq(out.values));
    return out;
}

// Fourier-series coefficients of exp(j*phi(t)) via a single length-M DFT,
// M >= 4*max_order. The taper field of params is ignored: GBF coefficients
// are defined for the untapered phase.
//
// a0 handling: when the linear phase term completes an integer number of
// cycles over T (a0*T/2 integer) it is an exact order offset of the a0 = 0
// coefficient array; otherwise it is folded into the sampled phase and the
// result is flagged approximate (the signal is no longer T-periodic).
inline GbfCoefficients gbf_via_fft(const WaveformParams& params, int max_order = -1) {
    params.validate();
    const bool adaptive = max_order < 0;
    if (adaptive) max_order = default_max_order(params.indices);
    const int bound = min_safe_order(params.indices);
    if (max_order < bound)
        throw std::invalid_argument(
            "gbf_via_fft: max_order " + std::to_string(max_order) +
            " below truncation-risk bound ceil(sum k|index_k|) + 8 = " +
            std::to_string(bound));

    int order_offset = 0;
    bool fold_a0 = false;
    // a0 enters the model through the even modulation function only
    if (params.symmetry == Symmetry::Even && params.a0 != 0.0) {
        const double cycles = 0.5 * params.a0 * params.duration_T;
        const double rounded = std::round(cycles);
        if (std::abs(cycles - rounded) < 1e-9 * std::max(1.0, std::abs(cycles))) {
            order_offset = static_cast<int>(rounded);
        } else {
            fold_a0 = true;
        }
    }

    WaveformParams sampled = params;
    sampled.taper = TaperSpec::rectangular();
    if (!fold_a0) sampled.a0 = 0.0;

    const double T = params.duration_T;
    std::vector<cplx> u;
    std::size_t m = 0;
    auto run_dft = [&](std::size_t size) {
        m = size;
        u.assign(m, cplx{0.0, 0.0});
        for (std::size_t n = 0; n < m; ++n) {
            const double t = -0.5 * T + static_cast<double>(n) * T / static_cast<double>(m);
            const double phi = phase_function(sampled, t);
            u[n] = cplx(std::cos(phi), std::sin(phi));
        }
        u = fft(std::move(u));
    };
    auto tail_outside = [&](int order) {
        // exp(j phi) has unit modulus, so sum over all M bins of |c|^2 is 1
        KahanSum inside;
        const double scale_sq = 1.0 / (static_cast<double>(m) * static_cast<double>(m));
        for (int l = -order; l <= order; ++l) {
            const std::size_t bin = static_cast<std::size_t>((l % static_cast<int>(m) +
                                                              static_cast<int>(m)) %
                                                             static_cast<int>(m));
            inside.add(std::norm(u[bin]) * scale_sq);
        }
        return std::max(0.0, 1.0 - inside.sum);
    };

    run_dft(next_pow2(std::max<std::size_t>(4 * static_cast<std::size_t>(max_order), 512)));
    if (adaptive && !fold_a0) {
        // grow the retained band (and the DFT with it) until the measured
        // tail meets the target; the signal is periodic, so the mass is real
        for (int attempt = 0; attempt < 8; ++attempt) {
            int hi = static_cast<int>(m) / 4;
            if (tail_outside(hi) > target_truncation_tail) {
                run_dft(2 * m);
                continue;
            }
            int lo = max_order;
            if (tail_outside(lo) <= target_truncation_tail) break;
            while (hi - lo > 1) {  // smallest order meeting the target
                const int mid = (lo + hi) / 2;
                if (tail_outside(mid) <= target_truncation_tail) hi = mid;
                else lo = mid;
            }
            max_order = hi;
            break;
        }
    }

    GbfCoefficients out;
    out.min_order = -max_order + order_offset;
    out.max_order = max_order + order_offset;
    out.a0_folded = fold_a0;
    out.values.resize(static_cast<std::size_t>(2 * max_order) + 1);
    const double scale = 1.0 / static_cast<double>(m);
    for (int l = -max_order; l <= max_order; ++l) {
        // c_l = (-1)^l / M * DFT[u](l); sign from referencing t0 = -T/2
        const std::size_t bin = static_cast<std::size_t>((l % static_cast<int>(m) +
                                                          static_cast<int>(m)) %
                                                         static_cast<int>(m));
        const double sign = (l % 2 == 0) ? 1.0 : -1.0;
        out.values[static_cast<std::size_t>(l + max_order)] = sign * scale * u[bin];
    }
    out.truncation_tail = std::max(0.0, 1.0 - detail::sum_sq(out.values));
    return out;
}

}  // namespace mtsfm
