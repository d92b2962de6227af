#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mtsfm/gbf.hpp"
#include "mtsfm/synthesis.hpp"
#include "oracles.hpp"

using namespace mtsfm;

namespace {

WaveformParams params_of(Symmetry sym, std::vector<double> idx, double T = 1.0) {
    WaveformParams p;
    p.duration_T = T;
    p.symmetry = sym;
    p.indices = std::move(idx);
    return p;
}

}  // namespace

TEST_CASE("modulation function spot values") {
    CHECK(modulation_function(params_of(Symmetry::Even, {0.0, 0.0}), 0.2) == 0.0);
    CHECK(modulation_function(params_of(Symmetry::Odd, {0.7, 0.3}), 0.0) == 0.0);
    // even K=1, alpha=1, T=1: a_1 = 1 Hz at t=0
    CHECK(modulation_function(params_of(Symmetry::Even, {1.0}), 0.0) ==
          Catch::Approx(1.0).margin(1e-15));
    CHECK_THROWS_AS(modulation_function(params_of(Symmetry::Even, {1.0}), 0.75),
                    std::invalid_argument);
}

TEST_CASE("phase function spot values") {
    CHECK(phase_function(params_of(Symmetry::Even, {0.0}), 0.1) == 0.0);
    // sin(2 pi * (T/4) / T) = sin(pi/2) = 1 rad
    CHECK(phase_function(params_of(Symmetry::Even, {1.0}), 0.25) ==
          Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("phase derivative equals 2 pi m(t)") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Symmetry sym : {Symmetry::Even, Symmetry::Odd}) {
        std::vector<double> idx(6);
        for (double& v : idx) v = gauss(rng);
        WaveformParams p = params_of(sym, idx, 2.0);
        const double h = p.duration_T * 1e-6;
        for (double t : {-0.7, -0.31, 0.05, 0.4, 0.93}) {
            const double fd =
                (phase_function(p, t + h) - phase_function(p, t - h)) / (2.0 * h);
            const double truth = 2.0 * pi * modulation_function(p, t);
            CHECK(fd == Catch::Approx(truth).margin(1e-6 * std::max(1.0, std::abs(truth))));
        }
    }
}

TEST_CASE("CW synthesis is a constant-modulus pulse") {
    WaveformParams p = params_of(Symmetry::Even, {0.0});
    SamplingGrid g = make_grid(p);
    CHECK(g.degenerate_fallback);
    SampledWaveform w = synthesize(p, g);
    const double expected = 1.0 / std::sqrt(double(g.num_samples) * g.dt);
    for (const cplx& s : w.samples) CHECK(std::abs(s) == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("rectangular taper means constant envelope and unit PAPR") {
    WaveformParams p = make_random_waveform(12, 1.0, Symmetry::Even, 60.0,
                                            TaperSpec::rectangular(), 17);
    SampledWaveform w = synthesize(p, make_grid(p));
    double lo = 1e300, hi = 0.0;
    for (const cplx& s : w.samples) {
        lo = std::min(lo, std::abs(s));
        hi = std::max(hi, std::abs(s));
    }
    CHECK(hi - lo < 1e-12);
    CHECK(w.energy == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("tukey taper stays unit energy and zeroes the edges") {
    WaveformParams p = make_random_waveform(8, 1.0, Symmetry::Even, 40.0,
                                            TaperSpec::tukey(0.05), 23);
    SampledWaveform w = synthesize(p, make_grid(p));
    CHECK(w.energy == Catch::Approx(1.0).margin(1e-9));
    CHECK(std::abs(w.samples.front()) < 1e-12);  // window hits zero at t = -T/2
}

TEST_CASE("swept bandwidth of simple shapes") {
    WaveformParams cw = params_of(Symmetry::Even, {0.0});
    SamplingGrid g = make_grid_for_bandwidth(1.0, 0.0, 16.0);
    CHECK(swept_bandwidth(cw, g) == 0.0);

    WaveformParams k1 = params_of(Symmetry::Even, {1.0});
    CHECK(swept_bandwidth(k1, make_grid_for_bandwidth(1.0, 4.0, 16.0)) ==
          Catch::Approx(2.0).margin(1e-9));
    CHECK(estimate_swept_bandwidth(k1) == Catch::Approx(2.0).margin(1e-9));

    // too-coarse grid is rejected
    SamplingGrid coarse;
    coarse.num_samples = 16;
    coarse.dt = 1.0 / 16.0;
    coarse.t0 = -0.5;
    WaveformParams k8 = params_of(Symmetry::Even, std::vector<double>(8, 0.5));
    CHECK_THROWS_AS(swept_bandwidth(k8, coarse), std::invalid_argument);
}

TEST_CASE("scale_to_tbp behaves linearly") {
    WaveformParams p = params_of(Symmetry::Even, {1.0, 0.4, -0.2});
    const double tbp_now = p.duration_T * estimate_swept_bandwidth(p);

    WaveformParams doubled = scale_to_tbp(p, 2.0 * tbp_now);
    for (std::size_t i = 0; i < p.indices.size(); ++i)
        CHECK(doubled.indices[i] == Catch::Approx(2.0 * p.indices[i]).epsilon(1e-9));

    WaveformParams same = scale_to_tbp(p, tbp_now);
    for (std::size_t i = 0; i < p.indices.size(); ++i)
        CHECK(same.indices[i] == Catch::Approx(p.indices[i]).epsilon(1e-12));

    CHECK_THROWS_AS(scale_to_tbp(params_of(Symmetry::Even, {0.0}), 10.0), std::domain_error);
}

TEST_CASE("seeded K=64 draw reproduces the target TBP") {
    WaveformParams p = make_random_waveform(64, 1.0, Symmetry::Even, 100.0,
                                            TaperSpec::rectangular(), 42);
    const double tbp = p.duration_T * estimate_swept_bandwidth(p);
    CHECK(tbp == Catch::Approx(100.0).margin(0.5));
}

TEST_CASE("random draws are deterministic and weighting matters") {
    auto a = draw_random_indices(16, 99);
    auto b = draw_random_indices(16, 99);
    CHECK(a == b);
    auto flat = draw_random_indices(16, 99, InitWeighting::Flat);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i] == Catch::Approx(flat[i] / double(i + 1)).epsilon(1e-15));
}

TEST_CASE("closed-form spectrum of the unmodulated pulse is a sinc") {
    WaveformParams p = params_of(Symmetry::Even, {0.0});
    GbfCoefficients c = gbf_via_fft(p);
    std::vector<double> freqs{-2.5, -0.75, 0.0, 0.3, 1.25, 4.0};
    SpectrumGrid s = spectrum_closed_form(c, p, freqs);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        const double x = pi * freqs[i];
        const double expect = (x == 0.0) ? 1.0 : std::sin(x) / x;
        CHECK(std::abs(s.values[i] - cplx{expect, 0.0}) < 1e-10);
    }
}

TEST_CASE("closed-form spectrum matches Simpson quadrature off the bin grid") {
    WaveformParams p = params_of(Symmetry::Even, {1.5});
    GbfCoefficients c = gbf_via_fft(p);
    std::vector<double> freqs{-4.3, -1.7, -0.4, 0.25, 0.9, 2.6, 5.1};
    SpectrumGrid s = spectrum_closed_form(c, p, freqs);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        const cplx ref = oracles::simpson_ft(p, freqs[i]);
        CHECK(std::abs(s.values[i] - ref) < 1e-6);
    }
}

TEST_CASE("closed-form spectrum Parseval") {
    WaveformParams p = params_of(Symmetry::Even, {1.0, 0.5});
    GbfCoefficients c = gbf_via_fft(p);

    // on the Fourier-series bin grid the rectangle sum is exact
    std::vector<double> bins;
    for (int q = -64; q <= 64; ++q) bins.push_back(double(q));
    SpectrumGrid sb = spectrum_closed_form(c, p, bins);
    double acc = 0.0;
    for (const cplx& v : sb.values) acc += std::norm(v) * 1.0;
    CHECK(acc == Catch::Approx(1.0).margin(1e-6));

    // an off-bin covering grid only loses the truncated 1/f^2 sinc tails
    std::vector<double> freqs;
    const double df = 0.125;
    for (double f = -64.0; f <= 64.0 + 1e-9; f += df) freqs.push_back(f);
    SpectrumGrid s = spectrum_closed_form(c, p, freqs);
    std::vector<double> power(s.values.size());
    for (std::size_t i = 0; i < s.values.size(); ++i) power[i] = std::norm(s.values[i]);
    CHECK(oracles::trapz(freqs, power) == Catch::Approx(1.0).margin(3e-3));
}

TEST_CASE("closed-form spectrum rejects tapered params") {
    WaveformParams p = params_of(Symmetry::Even, {1.0});
    GbfCoefficients c = gbf_via_fft(p);
    p.taper = TaperSpec::tukey(0.1);
    CHECK_THROWS_AS(spectrum_closed_form(c, p, {0.0}), std::invalid_argument);
}

TEST_CASE("modulation is linear in the indices") {
    WaveformParams p = params_of(Symmetry::Odd, {0.9, -0.3, 0.2});
    WaveformParams p3 = p;
    for (double& v : p3.indices) v *= 3.0;
    for (double t : {-0.4, -0.1, 0.33}) {
        CHECK(modulation_function(p3, t) ==
              Catch::Approx(3.0 * modulation_function(p, t)).margin(1e-12));
    }
}

TEST_CASE("modulation symmetry on grid points") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> idx(5);
    for (double& v : idx) v = gauss(rng);

    WaveformParams even = params_of(Symmetry::Even, idx);
    WaveformParams odd = params_of(Symmetry::Odd, idx);
    for (double t : {0.05, 0.17, 0.31, 0.49}) {
        CHECK(modulation_function(even, -t) ==
              Catch::Approx(modulation_function(even, t)).margin(1e-12));
        CHECK(modulation_function(odd, -t) ==
              Catch::Approx(-modulation_function(odd, t)).margin(1e-12));
    }
}

TEST_CASE("basis-table synthesis equals direct synthesis bit for bit") {
    WaveformParams p = make_random_waveform(10, 1.0, Symmetry::Even, 50.0,
                                            TaperSpec::tukey(0.05), 31);
    SamplingGrid g = make_grid(p);
    SampledWaveform direct = synthesize(p, g);
    PhaseBasis basis = PhaseBasis::build(p, g);
    SampledWaveform fast = synthesize(basis, p.indices, p.a0);
    REQUIRE(direct.samples.size() == fast.samples.size());
    for (std::size_t i = 0; i < direct.samples.size(); ++i)
        CHECK(direct.samples[i] == fast.samples[i]);
}

TEST_CASE("spectrogram dimensions follow window and hop") {
    WaveformParams p = make_random_waveform(16, 1.0, Symmetry::Even, 100.0,
                                            TaperSpec::tukey(0.05), 7);
    SampledWaveform w = synthesize(p, make_grid(p));
    Spectrogram sg = spectrogram(w, 128, 32);
    CHECK(sg.freqs.size() == 128);
    CHECK(sg.times.size() == (w.samples.size() - 128) / 32 + 1);
    CHECK(sg.power.size() == sg.times.size() * sg.freqs.size());
}
