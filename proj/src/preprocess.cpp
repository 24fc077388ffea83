#include "csiid/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

namespace csiid {

void HampelConfig::validate() const {
    if (window < 3 || window % 2 == 0)
        throw InputError("hampel window must be odd and >= 3, got " +
                         std::to_string(window));
    if (!(alpha > 0.0 && alpha < 1.0))
        throw InputError("hampel alpha must be in (0, 1)");
    if (!(beta > 0.0)) throw InputError("hampel beta must be positive");
}

Mat temporal_mean_reduce(const Mat& m) {
    if (m.rows() < 2) throw InputError("temporal_mean_reduce requires at least 2 rows");
    const std::size_t out_rows = m.rows() / 2;
    Mat out(out_rows, m.cols());
    for (std::size_t t = 0; t < out_rows; ++t)
        for (std::size_t c = 0; c < m.cols(); ++c)
            out(t, c) = (m(2 * t, c) + m(2 * t + 1, c)) / 2.0;
    return out;
}

namespace {

double median_of(std::vector<double>& scratch) {
    const std::size_t n = scratch.size();
    auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(scratch.begin(), mid, scratch.end());
    return *mid;
}

}  // namespace

std::vector<double> hampel_filter(const std::vector<double>& series,
                                  const HampelConfig& cfg) {
    cfg.validate();
    if (series.size() < cfg.window)
        throw InputError("hampel_filter: series length " +
                         std::to_string(series.size()) + " shorter than window " +
                         std::to_string(cfg.window));

    const std::size_t half = cfg.window / 2;
    std::vector<double> out = series;
    std::vector<double> scratch(cfg.window);
    for (std::size_t center = half; center + half < series.size(); ++center) {
        const double* win = series.data() + (center - half);
        scratch.assign(win, win + cfg.window);
        const double med = median_of(scratch);
        for (std::size_t i = 0; i < cfg.window; ++i)
            scratch[i] = std::abs(win[i] - med);
        const double mad = median_of(scratch);
        if (std::abs(win[half] - med) > cfg.beta * mad) {
            // Exponential smoothing over the window elements before the
            // center, seeded at the window's first element.
            double s = win[0];
            for (std::size_t i = 1; i < half; ++i)
                s = cfg.alpha * win[i] + (1.0 - cfg.alpha) * s;
            out[center] = s;
        }
    }
    return out;
}

ButterworthFilter design_butterworth(std::size_t order, double cutoff_hz,
                                     double sample_rate_hz) {
    if (order < 1) throw InputError("butterworth order must be >= 1");
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0))
        throw InputError("butterworth cutoff must lie in (0, sample_rate/2), got " +
                         std::to_string(cutoff_hz) + " Hz at fs " +
                         std::to_string(sample_rate_hz) + " Hz");

    ButterworthFilter f;
    f.order = order;
    f.cutoff_hz = cutoff_hz;
    f.sample_rate_hz = sample_rate_hz;

    // Prewarped analog cutoff and bilinear constant.
    const double pi = std::numbers::pi;
    const double c = 2.0 * sample_rate_hz;
    const double wc = c * std::tan(pi * cutoff_hz / sample_rate_hz);

    // Analog prototype poles sit on the circle of radius wc in the left
    // half-plane; conjugate pairs become one biquad each.
    const std::size_t n_pairs = order / 2;
    for (std::size_t k = 0; k < n_pairs; ++k) {
        const double theta =
            pi * (2.0 * static_cast<double>(k) + static_cast<double>(order) + 1.0) /
            (2.0 * static_cast<double>(order));
        const double re = wc * std::cos(theta);  // negative for stable poles

        // H(s) = wc^2 / (s^2 - 2 re s + wc^2), bilinear s = c (1-z^-1)/(1+z^-1).
        const double a0 = c * c - 2.0 * re * c + wc * wc;
        Biquad q;
        q.b0 = wc * wc / a0;
        q.b1 = 2.0 * q.b0;
        q.b2 = q.b0;
        q.a1 = (2.0 * wc * wc - 2.0 * c * c) / a0;
        q.a2 = (c * c + 2.0 * re * c + wc * wc) / a0;
        f.sections.push_back(q);
    }
    if (order % 2 == 1) {
        // Real pole at -wc: H(s) = wc / (s + wc).
        const double a0 = c + wc;
        Biquad q;
        q.b0 = wc / a0;
        q.b1 = q.b0;
        q.b2 = 0.0;
        q.a1 = (wc - c) / a0;
        q.a2 = 0.0;
        f.sections.push_back(q);
    }

    if (!f.is_stable())
        throw IntegrityError("butterworth design produced an unstable filter");
    return f;
}

bool ButterworthFilter::is_stable() const {
    for (const Biquad& q : sections) {
        // Jury criterion for z^2 + a1 z + a2.
        if (!(std::abs(q.a2) < 1.0)) return false;
        if (!(std::abs(q.a1) < 1.0 + q.a2)) return false;
    }
    return !sections.empty();
}

double butterworth_magnitude(const ButterworthFilter& filter, double frequency_hz) {
    const double omega =
        2.0 * std::numbers::pi * frequency_hz / filter.sample_rate_hz;
    const std::complex<double> z1 = std::polar(1.0, -omega);
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h(1.0, 0.0);
    for (const Biquad& q : filter.sections)
        h *= (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
    return std::abs(h);
}

std::vector<double> butterworth_apply(const ButterworthFilter& filter,
                                      const std::vector<double>& series) {
    std::vector<double> out = series;
    // Direct form II transposed, one state pair per section.
    for (const Biquad& q : filter.sections) {
        double s1 = 0.0, s2 = 0.0;
        for (double& x : out) {
            const double y = q.b0 * x + s1;
            s1 = q.b1 * x - q.a1 * y + s2;
            s2 = q.b2 * x - q.a2 * y;
            x = y;
        }
    }
    return out;
}

std::vector<double> butterworth_apply_zero_phase(const ButterworthFilter& filter,
                                                 const std::vector<double>& series) {
    std::vector<double> fwd = butterworth_apply(filter, series);
    std::reverse(fwd.begin(), fwd.end());
    std::vector<double> back = butterworth_apply(filter, fwd);
    std::reverse(back.begin(), back.end());
    return back;
}

std::vector<double> phase_unwrap_row(const std::vector<double>& row) {
    std::vector<double> out = row;
    const double pi = std::numbers::pi;
    double correction = 0.0;
    for (std::size_t i = 1; i < row.size(); ++i) {
        const double d = row[i] - row[i - 1];
        if (d > pi)
            correction -= 2.0 * pi * std::floor((d + pi) / (2.0 * pi));
        else if (d < -pi)
            correction += 2.0 * pi * std::floor((-d + pi) / (2.0 * pi));
        out[i] = row[i] + correction;
    }
    return out;
}

PhaseCalibration estimate_phase_calibration(const std::vector<double>& phase_row,
                                            const std::vector<int>& indices) {
    if (phase_row.size() < 2 || phase_row.size() != indices.size())
        throw ShapeError("calibrate_phase: need K >= 2 matching phases and indices");
    if (indices.back() == indices.front())
        throw InputError("calibrate_phase: first and last subcarrier indices equal");
    PhaseCalibration cal;
    cal.slope = (phase_row.back() - phase_row.front()) /
                static_cast<double>(indices.back() - indices.front());
    cal.intercept = mean(phase_row);
    return cal;
}

std::vector<double> calibrate_phase(const std::vector<double>& phase_row,
                                    const std::vector<int>& indices,
                                    PhaseCalibration* estimated) {
    const PhaseCalibration cal = estimate_phase_calibration(phase_row, indices);
    if (estimated) *estimated = cal;
    std::vector<double> out(phase_row.size());
    for (std::size_t i = 0; i < phase_row.size(); ++i)
        out[i] = phase_row[i] - cal.slope * static_cast<double>(indices[i]) -
                 cal.intercept;
    return out;
}

double fit_slope(const std::vector<double>& values, const std::vector<int>& indices) {
    if (values.size() != indices.size() || values.size() < 2)
        throw ShapeError("fit_slope: mismatched or too-short inputs");
    double km = 0.0;
    for (int k : indices) km += k;
    km /= static_cast<double>(indices.size());
    const double vm = mean(values);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double dk = static_cast<double>(indices[i]) - km;
        num += dk * (values[i] - vm);
        den += dk * dk;
    }
    return num / den;
}

AmplitudePhaseMatrix preprocess_session(const AmplitudePhaseMatrix& m,
                                        const PreprocessConfig& cfg) {
    cfg.hampel.validate();
    AmplitudePhaseMatrix out;
    out.subcarrier_indices = m.subcarrier_indices;
    out.sample_rate_hz = m.sample_rate_hz;
    out.amplitude = m.amplitude;
    out.phase = m.phase;

    if (cfg.reduce_temporal) {
        out.amplitude = temporal_mean_reduce(out.amplitude);
        out.phase = temporal_mean_reduce(out.phase);
        out.sample_rate_hz /= 2.0;
    }

    const ButterworthFilter lp =
        design_butterworth(cfg.butterworth_order, cfg.butterworth_cutoff_hz,
                           out.sample_rate_hz);

    for (std::size_t c = 0; c < out.amplitude.cols(); ++c) {
        std::vector<double> col = out.amplitude.col(c);
        col = hampel_filter(col, cfg.hampel);
        col = cfg.butterworth_zero_phase ? butterworth_apply_zero_phase(lp, col)
                                         : butterworth_apply(lp, col);
        for (double& x : col) x = std::max(x, 0.0);
        out.amplitude.set_col(c, col);
    }

    for (std::size_t t = 0; t < out.phase.rows(); ++t) {
        std::vector<double> row = out.phase.row(t);
        row = phase_unwrap_row(row);
        row = calibrate_phase(row, out.subcarrier_indices);
        for (std::size_t c = 0; c < row.size(); ++c) out.phase(t, c) = row[c];
    }
    return out;
}

}  // namespace csiid
