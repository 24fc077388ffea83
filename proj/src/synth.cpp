#include "csiid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace csiid {

void SynthConfig::validate() const {
    if (classes < 2) throw InputError("synth classes must be >= 2");
    if (subcarriers < 2) throw InputError("synth subcarriers must be >= 2");
    if (!(sample_rate_hz > 0.0) || !(duration_s > 0.0))
        throw InputError("synth sample rate and duration must be positive");
    if (amp_noise_sigma < 0.0 || phase_noise_sigma < 0.0 || spike_rate < 0.0 ||
        spike_magnitude < 0.0 || sfo_slope_max < 0.0 || cfo_offset_max < 0.0)
        throw InputError("synth noise parameters must be nonnegative");
}

namespace {

// Smooth curve over subcarriers: white noise blurred with a moving average
// of width `smoothness`, scaled to the requested spread.
std::vector<double> smooth_curve(std::size_t k, std::size_t smoothness, double spread,
                                 Rng& rng) {
    std::vector<double> raw(k);
    for (double& v : raw) v = rng.normal();
    const std::size_t half = std::max<std::size_t>(smoothness, 1) / 2;
    std::vector<double> out(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        double s = 0.0;
        std::size_t n = 0;
        const std::size_t lo = i > half ? i - half : 0;
        const std::size_t hi = std::min(k - 1, i + half);
        for (std::size_t j = lo; j <= hi; ++j) {
            s += raw[j];
            ++n;
        }
        out[i] = s / static_cast<double>(n);
    }
    double m = 0.0;
    for (double v : out) m += v;
    m /= static_cast<double>(k);
    double var = 0.0;
    for (double v : out) var += (v - m) * (v - m);
    var /= static_cast<double>(k);
    const double scale = var > 0.0 ? spread / std::sqrt(var) : 0.0;
    for (double& v : out) v = (v - m) * scale;
    return out;
}

}  // namespace

ClassSignature generate_class_signature(std::size_t class_id, const SynthConfig& cfg) {
    cfg.validate();
    Rng rng = Rng(cfg.seed).fork(0xC1A5 + class_id);
    ClassSignature sig;

    // The floor keeps every subcarrier's quantization phase error small
    // (about 0.41/A radians), which the calibration-residual bound relies on.
    const double base = rng.uniform(40.0, 65.0);
    sig.amplitude = smooth_curve(cfg.subcarriers, cfg.signature_smoothness,
                                 0.22 * base, rng);
    for (double& v : sig.amplitude) v = std::max(v + base, 25.0);

    // Even-symmetric phase curve: both its endpoint slope and least-squares
    // slope over a symmetric index set are exactly zero, so calibration
    // residuals reflect only noise.
    std::vector<double> ph = smooth_curve(cfg.subcarriers, cfg.signature_smoothness,
                                          0.35, rng);
    sig.phase.resize(cfg.subcarriers);
    for (std::size_t i = 0; i < cfg.subcarriers; ++i)
        sig.phase[i] = 0.5 * (ph[i] + ph[cfg.subcarriers - 1 - i]);
    return sig;
}

namespace {

constexpr double kIqClamp = 127.0;  // 8-bit-like logging range

SynthSession synthesize(const ClassSignature& sig, int label, std::uint64_t stream_tag,
                        const SynthConfig& cfg, bool slow_modulation) {
    const std::size_t total =
        static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
    const std::size_t k = cfg.subcarriers;
    const std::vector<int> indices = default_subcarrier_indices(k);
    Rng rng = Rng(cfg.seed).fork(stream_tag);

    const double mod_freq_hz = rng.uniform(0.05, 0.15);
    const double mod_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double drift_freq_hz = rng.uniform(0.02, 0.08);
    const double tone_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    SynthSession out;
    out.session.sample_rate_hz = cfg.sample_rate_hz;
    out.session.label = label;
    out.session.records.reserve(total);
    out.injected_slopes.reserve(total);
    out.injected_offsets.reserve(total);

    for (std::size_t t = 0; t < total; ++t) {
        const double time_s = static_cast<double>(t) / cfg.sample_rate_hz;
        const double mod =
            slow_modulation
                ? 1.0 + cfg.slow_modulation_depth *
                            std::sin(2.0 * std::numbers::pi * mod_freq_hz * time_s +
                                     mod_phase)
                : 1.0;
        const double drift =
            slow_modulation
                ? cfg.slow_modulation_depth *
                      std::sin(2.0 * std::numbers::pi * drift_freq_hz * time_s)
                : 0.0;
        const double tone =
            cfg.interference_amp *
            std::sin(2.0 * std::numbers::pi * cfg.interference_hz * time_s + tone_phase);
        const double slope = rng.uniform(-cfg.sfo_slope_max, cfg.sfo_slope_max);
        const double offset = rng.uniform(-cfg.cfo_offset_max, cfg.cfo_offset_max);
        out.injected_slopes.push_back(slope);
        out.injected_offsets.push_back(offset);

        CsiRecord rec;
        rec.timestamp = time_s;
        rec.subcarrier_indices = indices;
        rec.iq.reserve(k);
        for (std::size_t c = 0; c < k; ++c) {
            double amp = sig.amplitude[c] * mod + tone +
                         rng.normal(0.0, cfg.amp_noise_sigma);
            if (cfg.spike_rate > 0.0 && rng.uniform() < cfg.spike_rate)
                amp += (rng.uniform() < 0.5 ? -1.0 : 1.0) * cfg.spike_magnitude;
            amp = std::max(amp, 0.0);
            const double phase = sig.phase[c] + drift +
                                 slope * static_cast<double>(indices[c]) + offset +
                                 rng.normal(0.0, cfg.phase_noise_sigma);
            const double re =
                std::clamp(std::round(amp * std::cos(phase)), -kIqClamp, kIqClamp);
            const double im =
                std::clamp(std::round(amp * std::sin(phase)), -kIqClamp, kIqClamp);
            rec.iq.emplace_back(re, im);
        }
        out.session.records.push_back(std::move(rec));
    }
    return out;
}

}  // namespace

SynthSession synthesize_session(std::size_t class_id, const SynthConfig& cfg) {
    cfg.validate();
    const ClassSignature sig = generate_class_signature(class_id, cfg);
    return synthesize(sig, static_cast<int>(class_id), 0x5E55 + class_id, cfg, true);
}

SynthSession synthesize_empty_room(const SynthConfig& cfg) {
    cfg.validate();
    // Smooth decrease from lower to higher subcarrier index, no signature.
    ClassSignature base;
    base.amplitude.resize(cfg.subcarriers);
    base.phase.assign(cfg.subcarriers, 0.0);
    for (std::size_t i = 0; i < cfg.subcarriers; ++i)
        base.amplitude[i] =
            55.0 - 20.0 * static_cast<double>(i) / static_cast<double>(cfg.subcarriers - 1);
    SynthConfig quiet = cfg;
    quiet.spike_rate = 0.0;
    quiet.interference_amp = 0.0;
    return synthesize(base, kUnlabeled, 0xE397, quiet, false);
}

}  // namespace csiid
