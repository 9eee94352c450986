#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sounderfeit/error.hpp"
#include "sounderfeit/waveguide.hpp"
#include "support.hpp"

using namespace sounderfeit;

namespace {

double final_quarter_rms(const std::vector<double>& x) {
    const std::size_t start = x.size() * 3 / 4;
    double acc = 0.0;
    for (std::size_t i = start; i < x.size(); ++i) acc += x[i] * x[i];
    return std::sqrt(acc / static_cast<double>(x.size() - start));
}

}  // namespace

TEST_CASE("bow table follows the friction curve") {
    // Independent evaluation of min(1, (|dv*slope| + 0.75)^-4).
    for (double dv : {-0.5, -0.1, 0.0, 0.01, 0.2, 1.0}) {
        for (double slope : {1.0, 3.0, 5.0}) {
            const double expect = std::min(1.0, std::pow(std::abs(dv * slope) + 0.75, -4.0));
            CHECK(BowedString::bow_table(dv, slope) == doctest::Approx(expect).epsilon(1e-14));
        }
    }
    CHECK(BowedString::bow_table(0.0, 5.0) == 1.0);
}

TEST_CASE("slope and bow-point ratio are linear in the raw controls") {
    CHECK(BowedString::bow_slope(0) == 5.0);
    CHECK(BowedString::bow_slope(128) == 1.0);
    CHECK(BowedString::bow_slope(64) == 3.0);
    CHECK(BowedString::beta_ratio(0) == doctest::Approx(0.027));
    CHECK(BowedString::beta_ratio(128) == doctest::Approx(0.227));
}

TEST_CASE("loop delay matches the requested frequency") {
    BowedString a(476.5);
    CHECK(a.loop_delay() == doctest::Approx(48000.0 / 476.5).epsilon(1e-9));
    CHECK(std::abs(a.loop_delay() - 100.73) < 0.01);
    BowedString b(480.0);
    CHECK(b.loop_delay() == doctest::Approx(100.0).epsilon(1e-12));
    SUBCASE("tuning holds across bow positions") {
        for (double pos : {0.0, 32.0, 64.0, 128.0}) {
            BowedString s(476.5);
            s.tick(BowParams{64, 100, pos, 476.5});
            CHECK(std::abs(s.loop_delay() - 48000.0 / 476.5) < 0.5);
            CHECK(s.neck_delay() > s.bridge_delay());
        }
    }
}

TEST_CASE("construction rejects out-of-range configuration") {
    CHECK_THROWS_AS(BowedString(19.0), Error);
    CHECK_THROWS_AS(BowedString(10001.0), Error);
    CHECK_THROWS_AS(BowedString(476.5, 44100.0), Error);
    try {
        BowedString s(5.0);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
    }
}

TEST_CASE("BowParams validation") {
    CHECK_NOTHROW(BowParams{}.validate());
    CHECK_NOTHROW((BowParams{0, 0, 0, 20}).validate());
    CHECK_NOTHROW((BowParams{128, 128, 128, 10000}).validate());
    CHECK_THROWS_AS((BowParams{-1, 100, 32, 476.5}).validate(), Error);
    CHECK_THROWS_AS((BowParams{64, 129, 32, 476.5}).validate(), Error);
    CHECK_THROWS_AS((BowParams{64, 100, 32, 5}).validate(), Error);
}

TEST_CASE("fractional delay interpolates between integer delays") {
    // Oracle: an integer delay is a pure shift; a fractional delay is the
    // linear blend of the two neighbouring integer delays.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> in(64);
    for (auto& v : in) v = u(rng);
    for (double d : {1.0, 5.0, 7.25, 12.6}) {
        FractionalDelay line(32);
        line.set_delay(d);
        const auto whole = static_cast<std::size_t>(d);
        const double frac = d - static_cast<double>(whole);
        for (std::size_t n = 0; n < in.size(); ++n) {
            const double out = line.tick(in[n]);
            const double a = n >= whole ? in[n - whole] : 0.0;
            const double b = n >= whole + 1 ? in[n - whole - 1] : 0.0;
            CHECK(out == doctest::Approx((1 - frac) * a + frac * b).epsilon(1e-12));
            CHECK(line.last_out() == out);
        }
    }
}

TEST_CASE("first tick from silence with zero velocity is zero") {
    BowedString s(476.5);
    CHECK(s.tick(BowParams{64, 0, 32, 476.5}) == 0.0);
}

TEST_CASE("render length and determinism") {
    const BowParams p{64, 100, 32, 476.5};
    const auto a = render(p, 1.0);
    const auto b = render(p, 1.0);
    CHECK(a.size() == 48000);
    CHECK(a == b);
    CHECK(render(p, 0.25).size() == 12000);
    CHECK_THROWS_AS(render(p, 0.0), Error);
    CHECK_THROWS_AS(render(p, -1.0), Error);
}

TEST_CASE("reference point sounds at the requested pitch") {
    const auto x = render(BowParams{64, 100, 32, 476.5}, 1.0);
    CHECK(final_quarter_rms(x) > 1e-5);
    const std::span<const double> tail(x.data() + 36000, 12000);
    const double f0 = testing::dft_peak_hz(tail, 48000.0, 200.0, 800.0);
    CHECK(std::abs(f0 - 476.5) / 476.5 < 0.03);
    const double lag = testing::autocorr_peak_lag(tail, 80, 120);
    CHECK(std::abs(lag - 100.7345) < 100.7345 * 0.03);
}

TEST_CASE("stable regimes keep their pitch") {
    // Property over the stable region: fundamental of the final quarter
    // second within 3 percent. Sampled on a coarse sub-grid.
    for (double p : {32.0, 72.0, 112.0}) {
        for (double q : {16.0, 64.0, 112.0}) {
            CAPTURE(p);
            CAPTURE(q);
            const auto x = render(BowParams{p, 100, q, 476.5}, 1.0);
            const std::span<const double> tail(x.data() + 36000, 12000);
            CHECK(final_quarter_rms(x) > 1e-5);
            const double f0 = testing::dft_peak_hz(tail, 48000.0, 200.0, 800.0);
            CHECK(std::abs(f0 - 476.5) / 476.5 < 0.03);
        }
    }
}

TEST_CASE("a corner of the grid is silent") {
    const auto x = render(BowParams{0, 100, 0, 476.5}, 1.0);
    CHECK(final_quarter_rms(x) <= 1e-5);
}

TEST_CASE("outputs stay finite and bounded over the grid") {
    for (double p = 0; p <= 128; p += 32) {
        for (double q = 0; q <= 128; q += 32) {
            const auto x = render(BowParams{p, 100, q, 476.5}, 0.3);
            const bool ok = std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v) && std::abs(v) < 10; });
            CHECK(ok);
        }
    }
}

TEST_CASE("silence set is deterministic") {
    auto silent = [] {
        std::vector<bool> s;
        for (double p = 0; p <= 128; p += 64)
            for (double q = 0; q <= 128; q += 64)
                s.push_back(final_quarter_rms(render(BowParams{p, 100, q, 476.5}, 0.5)) <= 1e-5);
        return s;
    };
    CHECK(silent() == silent());
}

TEST_CASE("clear returns the model to silence") {
    BowedString s(476.5);
    const BowParams p{64, 100, 32, 476.5};
    std::vector<double> first, second;
    for (int i = 0; i < 2000; ++i) first.push_back(s.tick(p));
    s.clear();
    for (int i = 0; i < 2000; ++i) second.push_back(s.tick(p));
    CHECK(first == second);
    CHECK(s.usable());
}
