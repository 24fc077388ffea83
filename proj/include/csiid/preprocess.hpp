// Signal sanitization: temporal mean reduction, Hampel/MAD outlier
// replacement, Butterworth low-pass on amplitude, and per-packet linear
// phase calibration.
#pragma once

#include <cstddef>
#include <vector>

#include "csiid/common.hpp"
#include "csiid/csi.hpp"

namespace csiid {

struct HampelConfig {
    std::size_t window = 15;  // odd, >= 3
    double beta = 3.0;        // MAD threshold multiplier
    double alpha = 0.8;       // exponential smoothing factor, in (0, 1)

    void validate() const;
};

struct Biquad {
    // y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

// Low-pass Butterworth realized as cascaded second-order sections obtained
// through the bilinear transform with frequency prewarping.
struct ButterworthFilter {
    std::size_t order = 5;
    double cutoff_hz = 10.0;
    double sample_rate_hz = 100.0;
    std::vector<Biquad> sections;  // ceil(order / 2) sections

    bool is_stable() const;  // all poles strictly inside the unit circle
};

ButterworthFilter design_butterworth(std::size_t order, double cutoff_hz,
                                     double sample_rate_hz);

// Magnitude of the cascade's transfer function at frequency_hz.
double butterworth_magnitude(const ButterworthFilter& filter, double frequency_hz);

// Causal single-pass filtering with zero initial state.
std::vector<double> butterworth_apply(const ButterworthFilter& filter,
                                      const std::vector<double>& series);

// Forward-backward pass (zero phase, squared magnitude response).
std::vector<double> butterworth_apply_zero_phase(const ButterworthFilter& filter,
                                                 const std::vector<double>& series);

// out[t] = (m[2t] + m[2t+1]) / 2; a trailing odd row is dropped. T >= 2.
Mat temporal_mean_reduce(const Mat& m);

// Sliding-window Hampel filter. The center of each full window is replaced
// when it deviates from the window median by more than beta * MAD; the
// replacement is an exponential smoothing over the window elements before
// the center, seeded at the window's first element. Indices whose centered
// window does not fit pass through unchanged. All statistics and smoothing
// inputs come from the original series.
std::vector<double> hampel_filter(const std::vector<double>& series,
                                  const HampelConfig& cfg);

// Cumulative +-2pi correction along a row whenever successive differences
// exceed pi.
std::vector<double> phase_unwrap_row(const std::vector<double>& row);

struct PhaseCalibration {
    double slope = 0.0;      // radians per subcarrier index
    double intercept = 0.0;  // radians
};

PhaseCalibration estimate_phase_calibration(const std::vector<double>& phase_row,
                                            const std::vector<int>& subcarrier_indices);

// Removes the endpoint-fit linear trend: out_i = phi_i - a k_i - b, with
// a = (phi_n - phi_1) / (k_n - k_1) and b = mean(phi). The input row must
// already be unwrapped along the subcarrier axis. Requires k_n != k_1.
std::vector<double> calibrate_phase(const std::vector<double>& phase_row,
                                    const std::vector<int>& subcarrier_indices,
                                    PhaseCalibration* estimated = nullptr);

struct PreprocessConfig {
    bool reduce_temporal = true;
    HampelConfig hampel;
    std::size_t butterworth_order = 5;
    double butterworth_cutoff_hz = 10.0;
    bool butterworth_zero_phase = false;
};

// Full pipeline in presentation order. Amplitude: temporal reduction, then
// Hampel and Butterworth per subcarrier column, clamped at 0 (filters can
// undershoot; amplitude is physically nonnegative). Phase: temporal
// reduction, then unwrap + calibrate per packet row. The output sample rate
// is halved when reduction is enabled.
AmplitudePhaseMatrix preprocess_session(const AmplitudePhaseMatrix& m,
                                        const PreprocessConfig& cfg);

// Least-squares slope of values against subcarrier indices; used by tests
// and the synthetic-data diagnostics.
double fit_slope(const std::vector<double>& values, const std::vector<int>& indices);

}  // namespace csiid
