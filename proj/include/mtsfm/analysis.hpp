// analysis.hpp - correlation functions (ACF/CCF and the delay-Doppler
// ambiguity surface) by closed form and numeric evaluation, plus the scalar
// waveform-shape metrics: ISR, CCF area, RMS bandwidth, PAPR, spectral
// efficiency and mainlobe width.
//
// Correlation convention (symmetric +-tau/2):
//   R_{m,n}(tau) = integral s_m(t - tau/2) s_n*(t + tau/2) dt
// which at zero Doppler equals the plain lag correlation
//   R[lag] = sum_n s_m[n] conj(s_n[n + lag]) dt.
// The numeric CCF is defined as exactly that discrete sum; its agreement
// with the continuous closed form is O(1/N) at the rectangular window
// edges, so comparisons should use grids with N >= ~2048.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mtsfm/core.hpp"
#include "mtsfm/fft.hpp"
#include "mtsfm/synthesis.hpp"

namespace mtsfm {

enum class CorrelationKind { Auto, Cross };

struct CorrelationResult {
    std::vector<double> delays;  // seconds, uniform, covering [-T, T]
    std::vector<cplx> values;
    CorrelationKind kind = CorrelationKind::Cross;
    double duration_T = 0.0;
};

struct AmbiguitySurface {
    std::vector<double> delays;    // seconds
    std::vector<double> dopplers;  // Hz
    std::vector<cplx> values;      // row-major: delays.size() x dopplers.size()

    cplx at(std::size_t i_delay, std::size_t i_doppler) const {
        return values[i_delay * dopplers.size() + i_doppler];
    }
};

// FFT-based fast correlation over all lags -N..N (endpoints zero).
inline CorrelationResult ccf_numeric(const SampledWaveform& w1, const SampledWaveform& w2) {
    if (!w1.grid.same_as(w2.grid))
        throw std::invalid_argument("ccf_numeric: waveforms must share one sampling grid");
    const std::size_t n = w1.samples.size();
    const std::size_t len = next_pow2(2 * n);
    std::vector<cplx> a(len, cplx{0.0, 0.0});
    std::vector<cplx> b(len, cplx{0.0, 0.0});
    std::copy(w1.samples.begin(), w1.samples.end(), a.begin());
    std::copy(w2.samples.begin(), w2.samples.end(), b.begin());
    a = fft(std::move(a));
    b = fft(std::move(b));
    for (std::size_t k = 0; k < len; ++k) a[k] *= std::conj(b[k]);
    a = ifft(std::move(a));  // a[m] = sum_n w1[n] conj(w2[n - m])

    const double dt = w1.grid.dt;
    CorrelationResult r;
    r.kind = (&w1 == &w2) ? CorrelationKind::Auto : CorrelationKind::Cross;
    r.duration_T = w1.grid.duration();
    r.delays.resize(2 * n + 1);
    r.values.resize(2 * n + 1);
    const int ni = static_cast<int>(n);
    for (int lag = -ni; lag <= ni; ++lag) {
        const std::size_t i = static_cast<std::size_t>(lag + ni);
        r.delays[i] = static_cast<double>(lag) * dt;
        if (lag == -ni || lag == ni) {
            r.values[i] = cplx{0.0, 0.0};  // no overlap at |tau| = T
        } else {
            // R[lag] = sum w1[n] conj(w2[n+lag]) dt = a[(-lag) mod len] * dt
            const std::size_t bin = static_cast<std::size_t>(((-lag) % static_cast<int>(len) +
                                                              static_cast<int>(len)) %
                                                             static_cast<int>(len));
            r.values[i] = a[bin] * dt;
        }
    }
    return r;
}

inline CorrelationResult acf_numeric(const SampledWaveform& w) { return ccf_numeric(w, w); }

namespace detail {

inline void require_rect(const WaveformParams& p, const char* who) {
    if (!p.taper.is_rectangular())
        throw std::invalid_argument(std::string(who) + ": closed form assumes a rectangular taper");
}

// Shared double-sum kernel of the closed-form CCF/CAF:
//   (W/T) sum_{l,l'} c1_l conj(c2_l') u^(l+l') sinc[pi (W/T)(nu T + l - l')]
// with W = T - |tau| and u = exp(-j pi tau / T).
inline cplx gbf_double_sum(const GbfCoefficients& c1, const GbfCoefficients& c2,
                           double duration_T, double tau, double nu_t) {
    const double w_frac = (duration_T - std::abs(tau)) / duration_T;
    if (w_frac <= 0.0) return {0.0, 0.0};

    const cplx u = std::polar(1.0, -pi * tau / duration_T);
    auto powers = [&u](int lo, int hi) {
        std::vector<cplx> p(static_cast<std::size_t>(hi - lo) + 1);
        cplx v = std::pow(u, lo);
        for (int l = lo; l <= hi; ++l) {
            p[static_cast<std::size_t>(l - lo)] = v;
            v *= u;
        }
        return p;
    };
    // v_l = c1_l u^l ; w_l' = c2_l' u^(-l'), so v_l conj(w_l') carries u^(l+l')
    std::vector<cplx> up1 = powers(c1.min_order, c1.max_order);
    std::vector<cplx> up2 = powers(c2.min_order, c2.max_order);

    const int d_lo = c1.min_order - c2.max_order;
    const int d_hi = c1.max_order - c2.min_order;
    std::vector<double> sinc_tab(static_cast<std::size_t>(d_hi - d_lo) + 1);
    for (int d = d_lo; d <= d_hi; ++d) {
        const double x = pi * w_frac * (nu_t + static_cast<double>(d));
        sinc_tab[static_cast<std::size_t>(d - d_lo)] = (x == 0.0) ? 1.0 : std::sin(x) / x;
    }

    cplx acc{0.0, 0.0};
    for (int l = c1.min_order; l <= c1.max_order; ++l) {
        const cplx v = c1.values[static_cast<std::size_t>(l - c1.min_order)] *
                       up1[static_cast<std::size_t>(l - c1.min_order)];
        if (v == cplx{0.0, 0.0}) continue;
        cplx row{0.0, 0.0};
        for (int lp = c2.min_order; lp <= c2.max_order; ++lp) {
            const cplx w = c2.values[static_cast<std::size_t>(lp - c2.min_order)] *
                           std::conj(up2[static_cast<std::size_t>(lp - c2.min_order)]);
            row += std::conj(w) * sinc_tab[static_cast<std::size_t>(l - lp - d_lo)];
        }
        acc += v * row;
    }
    return w_frac * acc;
}

}  // namespace detail

// Closed-form CCF from two GBF coefficient sets (rectangular taper only).
inline CorrelationResult ccf_closed_form(const GbfCoefficients& c1, const GbfCoefficients& c2,
                                         const WaveformParams& params,
                                         const std::vector<double>& delays) {
    params.validate();
    detail::require_rect(params, "ccf_closed_form");
    CorrelationResult r;
    r.kind = CorrelationKind::Cross;
    r.duration_T = params.duration_T;
    r.delays = delays;
    r.values.resize(delays.size());
    for (std::size_t i = 0; i < delays.size(); ++i)
        r.values[i] = detail::gbf_double_sum(c1, c2, params.duration_T, delays[i], 0.0);
    return r;
}

inline CorrelationResult acf_closed_form(const GbfCoefficients& coeffs,
                                         const WaveformParams& params,
                                         const std::vector<double>& delays) {
    detail::require_rect(params, "acf_closed_form");
    CorrelationResult r = ccf_closed_form(coeffs, coeffs, params, delays);
    r.kind = CorrelationKind::Auto;
    return r;
}

// Closed-form cross-ambiguity surface chi(tau, nu) (rectangular taper only).
// The auto surface is the c1 == c2 case.
inline AmbiguitySurface ambiguity_surface(const GbfCoefficients& c1, const GbfCoefficients& c2,
                                          const WaveformParams& params,
                                          const std::vector<double>& delays,
                                          const std::vector<double>& dopplers) {
    params.validate();
    detail::require_rect(params, "ambiguity_surface");
    AmbiguitySurface s;
    s.delays = delays;
    s.dopplers = dopplers;
    s.values.resize(delays.size() * dopplers.size());
    for (std::size_t i = 0; i < delays.size(); ++i)
        for (std::size_t q = 0; q < dopplers.size(); ++q)
            s.values[i * dopplers.size() + q] = detail::gbf_double_sum(
                c1, c2, params.duration_T, delays[i], dopplers[q] * params.duration_T);
    return s;
}

// Default Doppler grid for ambiguity exports: nu in [-20/T, 20/T] at 1/(4T).
inline std::vector<double> default_doppler_grid(double duration_T, double span_over_t = 20.0,
                                                double step_over_t = 0.25) {
    std::vector<double> nu;
    const int steps = static_cast<int>(std::round(span_over_t / step_over_t));
    for (int q = -steps; q <= steps; ++q)
        nu.push_back(static_cast<double>(q) * step_over_t / duration_T);
    return nu;
}

// Direct quadrature of the CAF on grid lags (stride-decimated) for arbitrary
// Doppler values; handles tapered waveforms the closed form cannot.
inline AmbiguitySurface ambiguity_numeric(const SampledWaveform& w1, const SampledWaveform& w2,
                                          std::size_t lag_stride,
                                          const std::vector<double>& dopplers) {
    if (!w1.grid.same_as(w2.grid))
        throw std::invalid_argument("ambiguity_numeric: waveforms must share one sampling grid");
    if (lag_stride == 0) throw std::invalid_argument("ambiguity_numeric: lag stride must be > 0");
    const int n = static_cast<int>(w1.samples.size());
    const double dt = w1.grid.dt;

    AmbiguitySurface s;
    s.dopplers = dopplers;
    for (int lag = -n; lag <= n; lag += static_cast<int>(lag_stride))
        s.delays.push_back(static_cast<double>(lag) * dt);
    s.values.assign(s.delays.size() * dopplers.size(), cplx{0.0, 0.0});

    // phase factors exp(j 2 pi nu t_n), reused across lags
    std::vector<std::vector<cplx>> rot(dopplers.size());
    for (std::size_t q = 0; q < dopplers.size(); ++q) {
        rot[q].resize(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j)
            rot[q][static_cast<std::size_t>(j)] =
                std::polar(1.0, 2.0 * pi * dopplers[q] * w1.grid.time_at(static_cast<std::size_t>(j)));
    }

    std::vector<cplx> prod(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < s.delays.size(); ++i) {
        const int lag = static_cast<int>(std::llround(s.delays[i] / dt));
        const int j_lo = std::max(0, lag);
        const int j_hi = std::min(n, n + lag);  // product support: s1[j - lag] s2*[j]
        for (int j = j_lo; j < j_hi; ++j)
            prod[static_cast<std::size_t>(j)] =
                w1.samples[static_cast<std::size_t>(j - lag)] *
                std::conj(w2.samples[static_cast<std::size_t>(j)]);
        const double tau = s.delays[i];
        for (std::size_t q = 0; q < dopplers.size(); ++q) {
            cplx acc{0.0, 0.0};
            const std::vector<cplx>& r = rot[q];
            for (int j = j_lo; j < j_hi; ++j)
                acc += prod[static_cast<std::size_t>(j)] * r[static_cast<std::size_t>(j)];
            // symmetric-convention phase: chi_sym = e^{-j pi nu tau} * lag-type CAF
            s.values[i * dopplers.size() + q] =
                std::polar(1.0, -pi * dopplers[q] * tau) * acc * dt;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// scalar metrics
// ---------------------------------------------------------------------------

namespace detail {

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
        acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
    return acc;
}

inline void require_full_delay_coverage(const CorrelationResult& r, const char* who) {
    if (r.delays.size() < 3 || r.duration_T <= 0.0)
        throw std::invalid_argument(std::string(who) + ": malformed correlation result");
    const double dt = r.delays[1] - r.delays[0];
    if (r.delays.front() > -r.duration_T + 0.5 * dt ||
        r.delays.back() < r.duration_T - 0.5 * dt)
        throw std::invalid_argument(std::string(who) + ": delays must cover [-T, T]");
}

}  // namespace detail

// Area under |R|^2 over [-T, T] by trapezoidal quadrature.
inline double ccf_area(const CorrelationResult& r) {
    detail::require_full_delay_coverage(r, "ccf_area");
    std::vector<double> p(r.values.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(r.values[i]);
    return detail::trapezoid(r.delays, p);
}

// First null of |R|^2 beyond tau = 0: the smallest positive local minimum
// whose level is below threshold_db (power, relative to the tau = 0 peak),
// refined by parabolic interpolation. The threshold screens out shallow
// ripples riding on the mainlobe flank; the mainlobe-pedestal junction of a
// TBP ~ 100 thumbtack ACF sits near -20 dB, so the default must stay above
// the pedestal dips or the detector walks far past the mainlobe.
inline std::optional<double> first_null(const CorrelationResult& r,
                                        double threshold_db = -15.0) {
    if (r.kind != CorrelationKind::Auto)
        throw std::invalid_argument("first_null: requires an autocorrelation");
    const std::size_t n = r.values.size();
    std::size_t i0 = 0;  // index of tau = 0
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(r.delays[i]) < std::abs(r.delays[i0])) i0 = i;
    const double peak = std::norm(r.values[i0]);
    if (!(peak > 0.0)) return std::nullopt;
    const double cut = peak * std::pow(10.0, threshold_db / 10.0);

    for (std::size_t i = i0 + 1; i + 1 < n; ++i) {
        const double a = std::norm(r.values[i - 1]);
        const double b = std::norm(r.values[i]);
        const double c = std::norm(r.values[i + 1]);
        if (b < cut && b < a && b <= c) {
            const double curv = a - 2.0 * b + c;
            double tau = r.delays[i];
            if (curv > 0.0) {
                const double delta = 0.5 * (a - c) / curv;
                if (std::abs(delta) <= 1.0)
                    tau += delta * (r.delays[i + 1] - r.delays[i]);
            }
            return tau;
        }
    }
    return std::nullopt;
}

struct IsrResult {
    double isr = 0.0;
    double isr_db = 0.0;
    double tau_m = 0.0;      // first-null delay used for the split
    bool degenerate = false; // no null found; ISR = 0 by convention
};

namespace detail {

// Splits the trapezoid integral of |R|^2 at +-tau_m so that
// mainlobe + sidelobe == total exactly.
inline IsrResult isr_from_split(const CorrelationResult& r, double tau_m) {
    require_full_delay_coverage(r, "isr");
    std::vector<double> p(r.values.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(r.values[i]);

    double total = 0.0;
    double main = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        const double x0 = r.delays[i], x1 = r.delays[i + 1];
        const double seg = 0.5 * (p[i] + p[i + 1]) * (x1 - x0);
        total += seg;
        auto lerp = [&](double x) {
            const double f = (x - x0) / (x1 - x0);
            return p[i] + f * (p[i + 1] - p[i]);
        };
        // overlap of [x0, x1] with the mainlobe band [-tau_m, tau_m]
        const double lo = std::max(x0, -tau_m);
        const double hi = std::min(x1, tau_m);
        if (hi > lo) main += 0.5 * (lerp(lo) + lerp(hi)) * (hi - lo);
    }
    IsrResult out;
    out.tau_m = tau_m;
    if (!(main > 0.0))
        throw std::domain_error("isr: empty mainlobe area");
    out.isr = std::max(0.0, total - main) / main;
    out.isr_db = db10(out.isr);
    return out;
}

}  // namespace detail

// ISR with a caller-pinned mainlobe edge (used by the optimizer, which
// freezes tau_m at its initial value to keep the objective smooth).
inline IsrResult isr_with_mainlobe(const CorrelationResult& r, double tau_m) {
    if (r.kind != CorrelationKind::Auto)
        throw std::invalid_argument("isr: requires an autocorrelation");
    return detail::isr_from_split(r, tau_m);
}

// Exact ISR: sidelobe area beyond the detected first null over mainlobe area.
inline IsrResult isr_exact(const CorrelationResult& r, double null_threshold_db = -15.0) {
    if (r.kind != CorrelationKind::Auto)
        throw std::invalid_argument("isr_exact: requires an autocorrelation");
    std::optional<double> tau_m = first_null(r, null_threshold_db);
    if (!tau_m) {
        IsrResult out;
        out.degenerate = true;
        out.tau_m = r.duration_T;
        out.isr = 0.0;
        out.isr_db = db10(0.0);
        return out;
    }
    return detail::isr_from_split(r, *tau_m);
}

// Closed-form squared RMS bandwidth (rad^2/s^2), beta^2 = (2 pi^2/T^2) sum k^2 a_k^2,
// which is (2 pi)^2 times the second moment of the line spectrum:
// sum (l/T)^2 |c_l|^2 = (1/T) int m(t)^2 dt = sum k^2 a_k^2 / (2 T^2).
// Valid for a0 = 0 (zero-mean spectrum); Even and Odd share the formula.
inline double rms_bandwidth_sq(const WaveformParams& p) {
    p.validate();
    if (p.a0 != 0.0)
        throw std::invalid_argument("rms_bandwidth_sq: closed form requires a0 = 0");
    double s = 0.0;
    for (std::size_t i = 0; i < p.indices.size(); ++i) {
        const double k = static_cast<double>(i + 1);
        s += k * k * p.indices[i] * p.indices[i];
    }
    return 2.0 * pi * pi / (p.duration_T * p.duration_T) * s;
}

namespace detail {

// Energy density spectrum |S(f)|^2 via an optionally zero-padded DFT.
// Returned freqs are in natural DFT order mapped to signed Hz.
struct Eds {
    std::vector<double> freqs;
    std::vector<double> power;
    double df = 0.0;
};

inline Eds eds_from_samples(const SampledWaveform& w, std::size_t pad_factor = 1) {
    const std::size_t n = w.samples.size();
    const std::size_t len = next_pow2(n * std::max<std::size_t>(pad_factor, 1));
    std::vector<cplx> buf(len, cplx{0.0, 0.0});
    std::copy(w.samples.begin(), w.samples.end(), buf.begin());
    buf = fft(std::move(buf));
    Eds e;
    e.df = 1.0 / (static_cast<double>(len) * w.grid.dt);
    e.freqs.resize(len);
    e.power.resize(len);
    const double dt = w.grid.dt;
    const int half = static_cast<int>(len) / 2;
    for (std::size_t q = 0; q < len; ++q) {
        int qi = static_cast<int>(q);
        if (qi > half) qi -= static_cast<int>(len);
        e.freqs[q] = static_cast<double>(qi) * e.df;
        e.power[q] = std::norm(buf[q] * dt);
    }
    return e;
}

}  // namespace detail

// Numeric squared RMS bandwidth (2 pi)^2 * int f^2 |S|^2 df / int |S|^2 df,
// evaluated on the natural (unpadded) DFT grid where the rectangular-window
// line spectrum is sampled exactly on its Fourier-series bins.
inline double rms_bandwidth_sq_numeric(const SampledWaveform& w) {
    detail::Eds e = detail::eds_from_samples(w, 1);
    double m2 = 0.0, m0 = 0.0;
    for (std::size_t q = 0; q < e.power.size(); ++q) {
        m0 += e.power[q];
        m2 += e.freqs[q] * e.freqs[q] * e.power[q];
    }
    if (!(m0 > 0.0)) throw std::domain_error("rms_bandwidth_sq_numeric: zero spectrum");
    return 4.0 * pi * pi * m2 / m0;
}

// int |S(f)|^4 df; |S|^2 has correlation-limited support [-T, T], so a
// half-bin (2x padded) spectral grid integrates the quartic exactly up to
// DFT-vs-continuous leakage.
inline double spectral_quartic_integral(const SampledWaveform& w) {
    detail::Eds e = detail::eds_from_samples(w, 2);
    KahanSum acc;
    for (double p : e.power) acc.add(p * p);
    return acc.sum * e.df;
}

// Rihaczek-style ISR approximation (2 beta_rms / pi) * int |S|^4 df, with
// beta from the closed form and the quartic integral from the FFT EDS.
inline double isr_approx(const GbfCoefficients& /*coeffs*/, const WaveformParams& p,
                         double oversample = 16.0) {
    detail::require_rect(p, "isr_approx");
    const double beta_sq = rms_bandwidth_sq(p);
    if (!(beta_sq > 0.0))
        throw std::domain_error("isr_approx: zero RMS bandwidth (unmodulated waveform)");
    WaveformParams rect = p;
    rect.taper = TaperSpec::rectangular();
    SampledWaveform w = synthesize(rect, make_grid(rect, oversample));
    return (2.0 * std::sqrt(beta_sq) / pi) * spectral_quartic_integral(w);
}

// Mainlobe area of the ISR approximation, A_0 = pi / (2 beta_rms), seconds.
inline double mainlobe_area_approx(double rms_bandwidth_sq_value) {
    if (!(rms_bandwidth_sq_value > 0.0))
        throw std::domain_error("mainlobe_area_approx: zero RMS bandwidth");
    return pi / (2.0 * std::sqrt(rms_bandwidth_sq_value));
}

// Peak-to-average power ratio of the sampled envelope.
inline double papr(const SampledWaveform& w) {
    if (w.samples.empty()) throw std::invalid_argument("papr: empty waveform");
    double peak = 0.0;
    KahanSum mean;
    for (const cplx& s : w.samples) {
        const double p = std::norm(s);
        peak = std::max(peak, p);
        mean.add(p);
    }
    const double avg = mean.sum / static_cast<double>(w.samples.size());
    if (!(avg > 0.0)) throw std::domain_error("papr: zero-power waveform");
    return peak / avg;
}

struct Band {
    double lo_hz = 0.0;
    double hi_hz = 0.0;
};

// Default measurement band: the swept band [min m, max m] plus a 1/T guard
// on each side. Requires a modulated waveform.
inline Band default_se_band(const WaveformParams& p) {
    auto scan = detail::scan_modulation_range(p, detail::sweep_scan_samples(p.indices.size()));
    if (!(scan.max_hz - scan.min_hz > 0.0))
        throw std::domain_error(
            "spectral_efficiency: zero swept bandwidth, an explicit band is required");
    const double guard = 1.0 / p.duration_T;
    return {scan.min_hz - guard, scan.max_hz + guard};
}

// Fraction of waveform energy inside [band.lo, band.hi].
inline double spectral_efficiency(const SampledWaveform& w, Band band,
                                  std::size_t pad_factor = 8) {
    if (!(band.hi_hz > band.lo_hz))
        throw std::invalid_argument("spectral_efficiency: empty band");
    detail::Eds e = detail::eds_from_samples(w, pad_factor);
    KahanSum in_band, total;
    for (std::size_t q = 0; q < e.power.size(); ++q) {
        total.add(e.power[q]);
        if (e.freqs[q] >= band.lo_hz && e.freqs[q] <= band.hi_hz) in_band.add(e.power[q]);
    }
    if (!(total.sum > 0.0)) throw std::domain_error("spectral_efficiency: zero spectrum");
    return in_band.sum / total.sum;
}

inline double spectral_efficiency(const SampledWaveform& w, const WaveformParams& p,
                                  std::size_t pad_factor = 8) {
    return spectral_efficiency(w, default_se_band(p), pad_factor);
}

}  // namespace mtsfm
