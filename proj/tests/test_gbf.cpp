#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mtsfm/gbf.hpp"
#include "oracles.hpp"

using namespace mtsfm;

namespace {

WaveformParams even_params(std::vector<double> idx, double a0 = 0.0) {
    WaveformParams p;
    p.duration_T = 1.0;
    p.symmetry = Symmetry::Even;
    p.a0 = a0;
    p.indices = std::move(idx);
    return p;
}

}  // namespace

TEST_CASE("zero modulation gives the single DC coefficient") {
    GbfCoefficients c = gbf_via_fft(even_params({0.0, 0.0}));
    CHECK(std::abs(c.at(0) - cplx{1.0, 0.0}) < 1e-12);
    for (int l = 1; l <= c.max_order; ++l) {
        CHECK(std::abs(c.at(l)) < 1e-12);
        CHECK(std::abs(c.at(-l)) < 1e-12);
    }
    CHECK(c.truncation_tail < 1e-12);
}

TEST_CASE("K=1 collapses to ordinary Bessel") {
    const double x = 1.7;
    GbfCoefficients c = gbf_via_convolution({x}, Symmetry::Even);
    for (int l = -10; l <= 10; ++l)
        CHECK(std::abs(c.at(l) - cplx{oracles::bessel_j_series_ref(l, x), 0.0}) < 1e-13);
}

TEST_CASE("first J0 zero drives c_0 to zero") {
    const double j0_zero = 2.40483;
    GbfCoefficients c = gbf_via_fft(even_params({j0_zero}));
    CHECK(std::abs(c.at(0)) < 1e-4);
    // and it tracks the series oracle value of J_0 there
    CHECK(std::abs(c.at(0).real() - oracles::bessel_j_series_ref(0, j0_zero)) < 1e-10);
}

TEST_CASE("odd K=1 coefficients have ordinary-Bessel magnitudes") {
    const double x = 1.3;
    WaveformParams p = even_params({x});
    p.symmetry = Symmetry::Odd;
    GbfCoefficients c = gbf_via_fft(p);
    for (int l = -6; l <= 6; ++l)
        CHECK(std::abs(c.at(l)) ==
              Catch::Approx(std::abs(oracles::bessel_j_series_ref(l, x))).margin(1e-10));
}

TEST_CASE("FFT and convolution agree per order") {
    const std::vector<std::vector<double>> vectors = {
        {1.0},      {2.4},           {0.5, 0.25},      {1.0, 0.5},
        {2.0, 1.0}, {0.7, 0.3, 0.1}, {2.0, -1.0, 0.5}, {1.5, 1.0, 0.8}};
    for (Symmetry sym : {Symmetry::Even, Symmetry::Odd}) {
        for (const auto& v : vectors) {
            const int order = std::max(min_safe_order(v), 24);
            WaveformParams p = even_params(v);
            p.symmetry = sym;
            GbfCoefficients cf = gbf_via_fft(p, order);
            GbfCoefficients cc = gbf_via_convolution(v, sym, order);
            for (int l = -std::min(order, 20); l <= std::min(order, 20); ++l)
                CHECK(std::abs(cf.at(l) - cc.at(l)) < 1e-8);
        }
    }
}

TEST_CASE("Parseval holds within the recorded tail") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 6; ++trial) {
        std::vector<double> idx(4);
        for (double& v : idx) v = gauss(rng);
        for (Symmetry sym : {Symmetry::Even, Symmetry::Odd}) {
            WaveformParams p = even_params(idx);
            p.symmetry = sym;
            GbfCoefficients c = gbf_via_fft(p);
            double sum = 0.0;
            for (const cplx& v : c.values) sum += std::norm(v);
            CHECK(sum == Catch::Approx(1.0).margin(c.truncation_tail + 1e-10));
            CHECK(c.truncation_tail <= 1e-9);
        }
    }
}

TEST_CASE("convolution Parseval for a small K=3 vector") {
    GbfCoefficients c = gbf_via_convolution({0.7, 0.3, 0.1}, Symmetry::Even);
    double sum = 0.0;
    for (const cplx& v : c.values) sum += std::norm(v);
    CHECK(sum == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("even symmetry with a0 = 0 gives real coefficients") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 4; ++trial) {
        std::vector<double> idx(5);
        for (double& v : idx) v = 0.8 * gauss(rng);
        GbfCoefficients c = gbf_via_fft(even_params(idx));
        for (const cplx& v : c.values) CHECK(std::abs(v.imag()) < 1e-10);
    }
}

TEST_CASE("a0 with integer cycle count is a pure order offset") {
    GbfCoefficients base = gbf_via_fft(even_params({1.0}));
    GbfCoefficients shifted = gbf_via_fft(even_params({1.0}, /*a0=*/4.0));  // 2 cycles
    CHECK_FALSE(shifted.a0_folded);
    CHECK(shifted.min_order == base.min_order + 2);
    CHECK(shifted.max_order == base.max_order + 2);
    for (int l = base.min_order; l <= base.max_order; ++l)
        CHECK(std::abs(shifted.at(l + 2) - base.at(l)) < 1e-12);
}

TEST_CASE("a0 with fractional cycles is folded and flagged") {
    GbfCoefficients c = gbf_via_fft(even_params({1.0}, /*a0=*/1.7));
    CHECK(c.a0_folded);
}

TEST_CASE("truncation-risk rejection names the bound") {
    std::vector<double> idx{3.0, 2.0};  // carson sum 7, bound 15
    CHECK(min_safe_order(idx) == 15);
    CHECK_THROWS_WITH(gbf_via_fft(even_params(idx), 10),
                      Catch::Matchers::ContainsSubstring("15"));
}

TEST_CASE("convolution oracle size limit") {
    std::vector<double> idx(9, 0.1);
    CHECK_THROWS_AS(gbf_via_convolution(idx, Symmetry::Even), std::invalid_argument);
}

TEST_CASE("gbf evaluation is deterministic") {
    WaveformParams p = even_params({1.2, -0.4, 0.9});
    GbfCoefficients a = gbf_via_fft(p);
    GbfCoefficients b = gbf_via_fft(p);
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
}
