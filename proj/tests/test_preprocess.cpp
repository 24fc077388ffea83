#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>

#include "csiid/preprocess.hpp"
#include "csiid/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace csiid;

TEST_CASE("temporal_mean_reduce averages consecutive pairs") {
    CHECK(temporal_mean_reduce(Mat::from_rows({{1}, {3}}))(0, 0) == 2.0);

    const Mat odd = temporal_mean_reduce(Mat::from_rows({{1}, {3}, {7}}));
    CHECK(odd.rows() == 1);  // trailing odd sample dropped
    CHECK(odd(0, 0) == 2.0);

    CHECK_THROWS_AS(temporal_mean_reduce(Mat::from_rows({{1.0}})), InputError);
}

TEST_CASE("temporal_mean_reduce preserves column means for even T") {
    Rng rng(11);
    Mat m(100, 52);
    for (double& v : m.data()) v = rng.uniform(-5, 5);
    const Mat r = temporal_mean_reduce(m);
    REQUIRE(r.rows() == 50);
    REQUIRE(r.cols() == 52);
    for (std::size_t c = 0; c < m.cols(); ++c)
        CHECK(oracle::mean_of(r.col(c)) ==
              doctest::Approx(oracle::mean_of(m.col(c))).epsilon(1e-12));
}

TEST_CASE("hampel passes constants through (MAD zero is not an outlier)") {
    const std::vector<double> series(31, 4.2);
    CHECK(hampel_filter(series, {}) == series);
}

TEST_CASE("hampel replaces an isolated spike via smoothing over the left half") {
    const std::vector<double> series{1, 1, 1, 100, 1, 1, 1};
    HampelConfig cfg;
    cfg.window = 7;
    const std::vector<double> expect(7, 1.0);
    CHECK(hampel_filter(series, cfg) == expect);
}

TEST_CASE("hampel boundary indices pass through unchanged") {
    // A spike whose centered window does not fit is left alone.
    std::vector<double> series(9, 1.0);
    series[1] = 100.0;
    series[7] = -50.0;
    HampelConfig cfg;
    cfg.window = 7;
    const auto out = hampel_filter(series, cfg);
    CHECK(out[1] == 100.0);
    CHECK(out[7] == -50.0);
}

TEST_CASE("hampel matches the brute-force oracle bitwise with planted spikes") {
    Rng rng(99);
    std::vector<double> series(1000);
    for (double& v : series) v = rng.normal();
    std::vector<std::size_t> spike_at;
    for (std::size_t i = 30; i < 990 && spike_at.size() < 10; i += 96)
        spike_at.push_back(i);
    REQUIRE(spike_at.size() == 10);
    for (std::size_t i : spike_at) series[i] += 10.0;

    HampelConfig cfg;  // w=15, beta=3, alpha=0.8
    const auto ours = hampel_filter(series, cfg);
    const auto ref = oracle::hampel_reference(series, cfg.window, cfg.beta, cfg.alpha);
    CHECK(ours == ref);

    std::size_t replaced = 0;
    for (std::size_t i : spike_at)
        if (ours[i] != series[i]) ++replaced;
    CHECK(replaced >= 9);
}

TEST_CASE("hampel equals the oracle bitwise on random series") {
    Rng rng(123);
    HampelConfig cfg;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> series(200);
        for (double& v : series) v = rng.normal(0.0, 2.0);
        if (trial % 3 == 0) series[100 + trial % 50] += rng.uniform(5, 30);
        CHECK(hampel_filter(series, cfg) ==
              oracle::hampel_reference(series, cfg.window, cfg.beta, cfg.alpha));
    }
}

TEST_CASE("hampel is idempotent on spike fixtures") {
    // A clean baseline with isolated spikes: the first pass removes every
    // spike and the second pass finds no new outliers.
    std::vector<double> series(400, 2.5);
    for (std::size_t i = 40; i < 400; i += 80) series[i] += 12.0;
    HampelConfig cfg;
    const auto once = hampel_filter(series, cfg);
    const auto twice = hampel_filter(once, cfg);
    CHECK(once == twice);
    CHECK(once != series);  // the spikes really were replaced
}

TEST_CASE("hampel input validation") {
    HampelConfig cfg;
    CHECK_THROWS_AS(hampel_filter(std::vector<double>(10, 0.0), cfg), InputError);
    cfg.window = 14;
    CHECK_THROWS_AS(hampel_filter(std::vector<double>(50, 0.0), cfg), InputError);
    cfg.window = 15;
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(hampel_filter(std::vector<double>(50, 0.0), cfg), InputError);
}

TEST_CASE("butterworth design hits the textbook response points") {
    const ButterworthFilter f = design_butterworth(5, 10.0, 100.0);
    REQUIRE(f.sections.size() == 3);  // ceil(5/2)
    CHECK(f.is_stable());
    CHECK(butterworth_magnitude(f, 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(butterworth_magnitude(f, 10.0) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-3));
    CHECK(butterworth_magnitude(f, 30.0) < 0.02);

    CHECK_THROWS_AS(design_butterworth(5, 50.0, 100.0), InputError);
    CHECK_THROWS_AS(design_butterworth(5, 60.0, 100.0), InputError);
}

TEST_CASE("butterworth impulse response decays") {
    const ButterworthFilter f = design_butterworth(5, 10.0, 100.0);
    std::vector<double> impulse(1200, 0.0);
    impulse[0] = 1.0;
    const auto h = butterworth_apply(f, impulse);
    double tail_max = 0.0;
    for (std::size_t i = 1000; i < h.size(); ++i)
        tail_max = std::max(tail_max, std::abs(h[i]));
    CHECK(tail_max < 1e-8);
}

TEST_CASE("butterworth_apply reaches DC gain on a constant") {
    const ButterworthFilter f = design_butterworth(5, 10.0, 100.0);
    const std::vector<double> series(400, 3.5);
    const auto y = butterworth_apply(f, series);
    CHECK(std::abs(y.back() - 3.5) < 1e-6);
}

TEST_CASE("butterworth_apply crushes a Nyquist alternation") {
    const ButterworthFilter f = design_butterworth(5, 10.0, 100.0);
    std::vector<double> series(600);
    for (std::size_t i = 0; i < series.size(); ++i) series[i] = i % 2 ? -1.0 : 1.0;
    const auto y = butterworth_apply(f, series);
    double tail_max = 0.0;
    for (std::size_t i = 300; i < y.size(); ++i)
        tail_max = std::max(tail_max, std::abs(y[i]));
    CHECK(tail_max < 1e-3);
}

TEST_CASE("butterworth_apply separates a 1 Hz tone from a 40 Hz tone") {
    const double fs = 100.0;
    const ButterworthFilter f = design_butterworth(5, 10.0, fs);
    std::vector<double> series(3000);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double t = static_cast<double>(i) / fs;
        series[i] = std::sin(2.0 * std::numbers::pi * 1.0 * t) +
                    std::sin(2.0 * std::numbers::pi * 40.0 * t);
    }
    const auto y = butterworth_apply(f, series);
    const double low = oracle::single_bin_amplitude(y, 1.0, fs, 1000, 3000);
    const double high = oracle::single_bin_amplitude(y, 40.0, fs, 1000, 3000);
    CHECK(low == doctest::Approx(1.0).epsilon(0.02));
    CHECK(high < 0.01);
}

TEST_CASE("zero-phase filtering squares the magnitude response") {
    const ButterworthFilter f = design_butterworth(5, 10.0, 100.0);
    std::vector<double> series(2000);
    for (std::size_t i = 0; i < series.size(); ++i)
        series[i] = std::sin(2.0 * std::numbers::pi * 10.0 * i / 100.0);
    const auto y = butterworth_apply_zero_phase(f, series);
    const double amp = oracle::single_bin_amplitude(y, 10.0, 100.0, 800, 1200);
    CHECK(amp == doctest::Approx(0.5).epsilon(0.05));  // (1/sqrt 2)^2 at cutoff
}

TEST_CASE("phase_unwrap_row recovers a steep wrapped ramp") {
    const double pi = std::numbers::pi;
    std::vector<double> wrapped(41);
    for (std::size_t i = 0; i < wrapped.size(); ++i) {
        double p = 0.3 * static_cast<double>(i);
        p = std::remainder(p, 2.0 * pi);
        wrapped[i] = p;
    }
    const auto un = phase_unwrap_row(wrapped);
    for (std::size_t i = 0; i < un.size(); ++i)
        CHECK(un[i] == doctest::Approx(0.3 * static_cast<double>(i)).epsilon(1e-12));
}

TEST_CASE("calibrate_phase removes a planted linear trend exactly") {
    const std::vector<int> indices = default_subcarrier_indices(52);
    std::vector<double> row(52);
    for (std::size_t i = 0; i < 52; ++i)
        row[i] = 0.5 * static_cast<double>(indices[i]) + 2.0;
    PhaseCalibration cal;
    const auto out = calibrate_phase(row, indices, &cal);
    CHECK(cal.slope == doctest::Approx(0.5));
    CHECK(cal.intercept == doctest::Approx(2.0));
    for (double v : out) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("calibrate_phase forces equal endpoints") {
    Rng rng(17);
    const std::vector<int> indices = default_subcarrier_indices(52);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> row(52);
        for (double& v : row) v = rng.uniform(-20, 20);
        const auto out = calibrate_phase(row, indices);
        CHECK(std::abs(out.front() - out.back()) <= 1e-12);
    }
}

TEST_CASE("calibrate_phase of a constant row is all zeros") {
    const std::vector<int> indices{-2, -1, 1, 2};
    const auto out = calibrate_phase({3.3, 3.3, 3.3, 3.3}, indices);
    for (double v : out) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("calibrate_phase is invariant to affine additions up to a constant") {
    Rng rng(23);
    const std::vector<int> indices = default_subcarrier_indices(26);
    std::vector<double> row(26);
    for (double& v : row) v = rng.uniform(-3, 3);
    const auto base = calibrate_phase(row, indices);

    const double c1 = 0.7, c0 = -4.0;
    std::vector<double> shifted(26);
    for (std::size_t i = 0; i < 26; ++i)
        shifted[i] = row[i] + c1 * static_cast<double>(indices[i]) + c0;
    const auto out = calibrate_phase(shifted, indices);

    const double delta = out[0] - base[0];
    for (std::size_t i = 0; i < 26; ++i)
        CHECK(out[i] - base[i] == doctest::Approx(delta).epsilon(1e-9));
    CHECK(std::abs(out.front() - out.back()) <= 1e-12);
}

TEST_CASE("calibrate_phase rejects equal endpoint indices") {
    CHECK_THROWS_AS(calibrate_phase({1.0, 2.0}, {3, 3}), InputError);
    CHECK_THROWS_AS(calibrate_phase({1.0}, {3}), ShapeError);
}

namespace {

AmplitudePhaseMatrix noisy_fixture(std::size_t rows, std::size_t k, bool planted) {
    Rng rng(31);
    AmplitudePhaseMatrix m;
    m.subcarrier_indices = default_subcarrier_indices(k);
    m.sample_rate_hz = 100.0;
    m.amplitude = Mat(rows, k);
    m.phase = Mat(rows, k);
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t c = 0; c < k; ++c) {
            double a = 50.0;
            if (planted) {
                a += rng.normal();
                a += 3.0 * std::sin(2.0 * std::numbers::pi * 40.0 * t / 100.0);
                if (rng.uniform() < 0.01) a += 20.0;
            }
            m.amplitude(t, c) = a;
            m.phase(t, c) = rng.uniform(-0.2, 0.2);
        }
    return m;
}

}  // namespace

TEST_CASE("preprocess_session halves rows and the sample rate") {
    const auto m = noisy_fixture(15000, 52, true);
    const auto out = preprocess_session(m, {});
    CHECK(out.amplitude.rows() == 7500);
    CHECK(out.amplitude.cols() == 52);
    CHECK(out.phase.rows() == 7500);
    CHECK(out.sample_rate_hz == doctest::Approx(50.0));
}

TEST_CASE("preprocess_session maps all-zero input to all-zero output") {
    AmplitudePhaseMatrix m;
    m.subcarrier_indices = default_subcarrier_indices(8);
    m.sample_rate_hz = 100.0;
    m.amplitude = Mat(64, 8, 0.0);
    m.phase = Mat(64, 8, 0.0);
    const auto out = preprocess_session(m, {});
    for (double v : out.amplitude.data()) CHECK(v == 0.0);
    for (double v : out.phase.data()) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("preprocess_session reduces per-subcarrier variance on noisy input") {
    const auto m = noisy_fixture(4000, 6, true);
    const auto out = preprocess_session(m, {});
    for (std::size_t c = 0; c < 6; ++c)
        CHECK(oracle::variance_of(out.amplitude.col(c)) <
              oracle::variance_of(m.amplitude.col(c)));
}

TEST_CASE("preprocess_session amplitude stays nonnegative and is deterministic") {
    auto m = noisy_fixture(600, 4, true);
    // Drive the amplitude near zero so the filters undershoot.
    for (double& v : m.amplitude.data()) v -= 49.0;
    const auto a = preprocess_session(m, {});
    for (double v : a.amplitude.data()) CHECK(v >= 0.0);
    const auto b = preprocess_session(m, {});
    CHECK(a.amplitude.data() == b.amplitude.data());
    CHECK(a.phase.data() == b.phase.data());
}
