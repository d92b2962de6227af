// synthesis.hpp - modulation/phase functions, time-series synthesis, swept
// bandwidth, TBP scaling and the closed-form spectrum of MTSFM waveforms.
//
// Modulation function (instantaneous frequency, Hz):
//   even:  m(t) = a0/2 + sum_k (k*alpha_k/T) cos(2 pi k t / T)
//   odd:   m(t) =        sum_k (k*beta_k /T) sin(2 pi k t / T)
// Phase (radians):
//   even:  phi(t) = pi a0 t + sum_k alpha_k sin(2 pi k t / T)
//   odd:   phi(t) =         - sum_k beta_k  cos(2 pi k t / T)
// Both are evaluated on the centered interval only; the even/odd symmetry
// they are named for does not hold on [0, T).

#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <vector>

#include "mtsfm/core.hpp"
#include "mtsfm/fft.hpp"

namespace mtsfm {

namespace detail {

inline void check_time_in_support(double t, double T) {
    const double slack = 1e-9 * T;
    if (t < -0.5 * T - slack || t > 0.5 * T + slack)
        throw std::invalid_argument("time outside waveform support [-T/2, T/2]");
}

// Tukey (tapered-cosine) amplitude on centered time; alpha is the total
// taper fraction, alpha = 0 gives the rectangular window.
inline double tukey_amplitude(double t, double T, double alpha) {
    if (alpha <= 0.0) return 1.0;
    double x = t / T + 0.5;  // [0, 1]
    x = std::min(std::max(x, 0.0), 1.0);
    double edge = 0.5 * alpha;
    if (x < edge) return 0.5 * (1.0 + std::cos(pi * (2.0 * x / alpha - 1.0)));
    if (x > 1.0 - edge) return 0.5 * (1.0 + std::cos(pi * (2.0 * (1.0 - x) / alpha - 1.0)));
    return 1.0;
}

}  // namespace detail

// Instantaneous frequency in Hz at time t (pre: t in [-T/2, T/2]).
inline double modulation_function(const WaveformParams& p, double t) {
    p.validate();
    detail::check_time_in_support(t, p.duration_T);
    const double T = p.duration_T;
    const double w0 = 2.0 * pi / T;
    double m = (p.symmetry == Symmetry::Even) ? 0.5 * p.a0 : 0.0;
    for (std::size_t i = 0; i < p.indices.size(); ++i) {
        const double k = static_cast<double>(i + 1);
        const double coeff = k * p.indices[i] / T;  // a_k = k*alpha_k/T (b_k likewise)
        m += (p.symmetry == Symmetry::Even) ? coeff * std::cos(w0 * k * t)
                                            : coeff * std::sin(w0 * k * t);
    }
    return m;
}

// Phase modulation in radians; analytic antiderivative of 2*pi*m(t).
inline double phase_function(const WaveformParams& p, double t) {
    p.validate();
    detail::check_time_in_support(t, p.duration_T);
    const double T = p.duration_T;
    const double w0 = 2.0 * pi / T;
    double phi = (p.symmetry == Symmetry::Even) ? pi * p.a0 * t : 0.0;
    for (std::size_t i = 0; i < p.indices.size(); ++i) {
        const double k = static_cast<double>(i + 1);
        phi += (p.symmetry == Symmetry::Even) ? p.indices[i] * std::sin(w0 * k * t)
                                              : -p.indices[i] * std::cos(w0 * k * t);
    }
    return phi;
}

// Precomputed per-grid trig tables so repeated synthesis over changing
// indices (the optimizer's inner loop) costs one multiply-add per
// (harmonic, sample) instead of a sin() call. synthesize(params, grid)
// routes through the same tables, so both paths produce identical samples.
struct PhaseBasis {
    SamplingGrid grid;
    Symmetry symmetry = Symmetry::Even;
    double duration_T = 0.0;
    TaperSpec taper;
    std::size_t harmonics = 0;
    std::vector<double> trig;    // harmonics x N; sin (even) or -cos (odd)
    std::vector<double> linear;  // N; pi * t_n, multiplied by a0
    std::vector<double> window;  // N; taper amplitude

    static PhaseBasis build(const WaveformParams& p, const SamplingGrid& grid) {
        p.validate();
        PhaseBasis b;
        b.grid = grid;
        b.symmetry = p.symmetry;
        b.duration_T = p.duration_T;
        b.taper = p.taper;
        b.harmonics = p.indices.size();
        const std::size_t n = grid.num_samples;
        b.trig.resize(b.harmonics * n);
        b.linear.resize(n);
        b.window.resize(n);
        const double w0 = 2.0 * pi / p.duration_T;
        for (std::size_t j = 0; j < n; ++j) {
            const double t = grid.time_at(j);
            b.linear[j] = pi * t;
            b.window[j] = p.taper.is_rectangular()
                              ? 1.0
                              : detail::tukey_amplitude(t, p.duration_T, p.taper.tukey_alpha);
        }
        for (std::size_t i = 0; i < b.harmonics; ++i) {
            const double k = static_cast<double>(i + 1);
            double* row = &b.trig[i * n];
            for (std::size_t j = 0; j < n; ++j) {
                const double arg = w0 * k * grid.time_at(j);
                row[j] = (p.symmetry == Symmetry::Even) ? std::sin(arg) : -std::cos(arg);
            }
        }
        return b;
    }
};

// Synthesis against a prebuilt basis; `indices` must match the basis size.
inline SampledWaveform synthesize(const PhaseBasis& basis,
                                  const std::vector<double>& indices, double a0) {
    if (indices.size() != basis.harmonics)
        throw std::invalid_argument("synthesize: index count does not match basis");
    const std::size_t n = basis.grid.num_samples;
    SampledWaveform w;
    w.grid = basis.grid;
    w.samples.resize(n);
    std::vector<double> phase(n, 0.0);
    if (a0 != 0.0 && basis.symmetry == Symmetry::Even)
        for (std::size_t j = 0; j < n; ++j) phase[j] = a0 * basis.linear[j];
    for (std::size_t i = 0; i < basis.harmonics; ++i) {
        const double* row = &basis.trig[i * n];
        const double c = indices[i];
        for (std::size_t j = 0; j < n; ++j) phase[j] += c * row[j];
    }
    for (std::size_t j = 0; j < n; ++j)
        w.samples[j] = basis.window[j] * cplx(std::cos(phase[j]), std::sin(phase[j]));
    normalize_to_unit_energy(w);
    return w;
}

// Unit-energy complex baseband samples of the waveform on the given grid.
inline SampledWaveform synthesize(const WaveformParams& p, const SamplingGrid& grid) {
    return synthesize(PhaseBasis::build(p, grid), p.indices, p.a0);
}

namespace detail {

struct SweepScan {
    double min_hz;
    double max_hz;
};

// Max/min of m(t) on a uniform scan with parabolic refinement of interior
// extrema; the refinement keeps the peak-capture error negligible next to
// the 0.5% TBP tolerances.
inline SweepScan scan_modulation_range(const WaveformParams& p, std::size_t n_samples) {
    const double T = p.duration_T;
    const double dt = T / static_cast<double>(n_samples);
    std::vector<double> m(n_samples);
    for (std::size_t j = 0; j < n_samples; ++j)
        m[j] = modulation_function(p, -0.5 * T + static_cast<double>(j) * dt);

    double lo = m[0], hi = m[0];
    for (std::size_t j = 1; j < n_samples; ++j) {
        lo = std::min(lo, m[j]);
        hi = std::max(hi, m[j]);
    }
    // refine interior extrema with a 3-point parabola
    for (std::size_t j = 1; j + 1 < n_samples; ++j) {
        const double a = m[j - 1], b = m[j], c = m[j + 1];
        const double curv = a - 2.0 * b + c;
        if (std::abs(curv) < 1e-300) continue;
        if ((b > a && b >= c) || (b < a && b <= c)) {
            const double delta = 0.5 * (a - c) / curv;
            if (std::abs(delta) <= 1.0) {
                const double v = b - 0.25 * (a - c) * delta;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    return {lo, hi};
}

inline std::size_t sweep_scan_samples(std::size_t harmonics) {
    return next_pow2(std::max<std::size_t>(4096, 64 * harmonics));
}

}  // namespace detail

// Peak-to-peak instantaneous frequency, measured on an internal dense scan.
inline double estimate_swept_bandwidth(const WaveformParams& p) {
    auto scan = detail::scan_modulation_range(p, detail::sweep_scan_samples(p.indices.size()));
    return scan.max_hz - scan.min_hz;
}

// Swept bandwidth Delta-f = max m(t) - min m(t) evaluated on the given grid.
// pre: the grid resolves the top harmonic (dt <= T/(8K)).
inline double swept_bandwidth(const WaveformParams& p, const SamplingGrid& grid) {
    p.validate();
    const double k = static_cast<double>(p.indices.size());
    if (grid.dt > p.duration_T / (8.0 * k))
        throw std::invalid_argument("swept_bandwidth: grid too coarse for harmonic K (need dt <= T/(8K))");
    auto scan = detail::scan_modulation_range(p, grid.num_samples);
    return scan.max_hz - scan.min_hz;
}

// Grid sized from the waveform's own (estimated) swept bandwidth.
inline SamplingGrid make_grid(const WaveformParams& p, double oversample = 16.0) {
    p.validate();
    return make_grid_for_bandwidth(p.duration_T, estimate_swept_bandwidth(p), oversample);
}

// Uniformly rescales the index vector so that T * Delta-f hits target_tbp.
// m(t) is linear in the indices, so the sweep scales exactly with them.
inline WaveformParams scale_to_tbp(const WaveformParams& p, double target_tbp) {
    p.validate();
    if (!(target_tbp > 0.0))
        throw std::invalid_argument("scale_to_tbp: target TBP must be > 0");
    const double df = estimate_swept_bandwidth(p);
    if (!(df > 0.0))
        throw std::domain_error("scale_to_tbp: waveform has zero swept bandwidth");
    const double factor = target_tbp / (p.duration_T * df);
    WaveformParams out = p;
    for (double& v : out.indices) v *= factor;
    return out;
}

struct SpectrumGrid {
    std::vector<double> freqs;  // Hz
    std::vector<cplx> values;
    double df = 0.0;            // spacing when the grid is uniform
};

// Closed-form spectrum S(f) = sqrt(T) sum_l c_l sinc[pi T (f - l/T)].
// Valid for the rectangular taper only.
inline SpectrumGrid spectrum_closed_form(const GbfCoefficients& coeffs,
                                         const WaveformParams& p,
                                         const std::vector<double>& freqs) {
    p.validate();
    if (!p.taper.is_rectangular())
        throw std::invalid_argument("spectrum_closed_form: closed form assumes a rectangular taper");
    const double T = p.duration_T;
    const double sqrt_t = std::sqrt(T);
    SpectrumGrid out;
    out.freqs = freqs;
    out.values.resize(freqs.size());
    if (freqs.size() >= 2) out.df = freqs[1] - freqs[0];
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        cplx acc{0.0, 0.0};
        for (int l = coeffs.min_order; l <= coeffs.max_order; ++l) {
            const double x = pi * (T * freqs[i] - static_cast<double>(l));
            const double sinc = (x == 0.0) ? 1.0 : std::sin(x) / x;
            acc += coeffs.at(l) * sinc;
        }
        out.values[i] = sqrt_t * acc;
    }
    return out;
}

struct Spectrogram {
    std::vector<double> times;   // frame centers, seconds
    std::vector<double> freqs;   // Hz, ascending (fftshifted)
    std::vector<double> power;   // row-major, times.size() x freqs.size()
};

// STFT power with a Hann window; defaults follow the export convention of
// 128-point windows at 75% overlap.
inline Spectrogram spectrogram(const SampledWaveform& w, std::size_t window_len = 128,
                               std::size_t hop = 32) {
    const std::size_t n = w.samples.size();
    if (window_len < 8 || window_len > n)
        throw std::invalid_argument("spectrogram: window length out of range");
    if (hop == 0) throw std::invalid_argument("spectrogram: hop must be > 0");

    std::vector<double> win(window_len);
    for (std::size_t i = 0; i < window_len; ++i)
        win[i] = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(i) /
                                      static_cast<double>(window_len - 1));

    Spectrogram sg;
    const double fs = 1.0 / w.grid.dt;
    sg.freqs.resize(window_len);
    const std::size_t half = window_len / 2;
    for (std::size_t i = 0; i < window_len; ++i) {
        const double q = static_cast<double>(i) - static_cast<double>(half);
        sg.freqs[i] = q * fs / static_cast<double>(window_len);
    }
    for (std::size_t start = 0; start + window_len <= n; start += hop) {
        std::vector<cplx> frame(window_len);
        for (std::size_t i = 0; i < window_len; ++i)
            frame[i] = w.samples[start + i] * win[i];
        frame = fft(std::move(frame));
        sg.times.push_back(w.grid.time_at(start + half));
        for (std::size_t i = 0; i < window_len; ++i) {
            // fftshift: output row is ascending in frequency
            const std::size_t src = (i + half) % window_len;
            sg.power.push_back(std::norm(frame[src]));
        }
    }
    return sg;
}

enum class InitWeighting { Flat, OneOverK };

// Seeded i.i.d. Gaussian draw of K modulation indices; the default 1/k
// weighting keeps high harmonics from dominating the modulation function.
inline std::vector<double> draw_random_indices(std::size_t harmonics, std::uint64_t seed,
                                               InitWeighting weighting = InitWeighting::OneOverK) {
    if (harmonics == 0)
        throw std::invalid_argument("draw_random_indices: need K >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> out(harmonics);
    for (std::size_t i = 0; i < harmonics; ++i) {
        const double g = gauss(rng);
        out[i] = (weighting == InitWeighting::OneOverK)
                     ? g / static_cast<double>(i + 1)
                     : g;
    }
    return out;
}

// Random waveform scaled to a target time-bandwidth product.
inline WaveformParams make_random_waveform(std::size_t harmonics, double duration_T,
                                           Symmetry symmetry, double target_tbp,
                                           TaperSpec taper, std::uint64_t seed,
                                           InitWeighting weighting = InitWeighting::OneOverK) {
    WaveformParams p;
    p.duration_T = duration_T;
    p.symmetry = symmetry;
    p.taper = taper;
    p.indices = draw_random_indices(harmonics, seed, weighting);
    return scale_to_tbp(p, target_tbp);
}

}  // namespace mtsfm
