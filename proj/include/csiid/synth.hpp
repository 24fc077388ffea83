// Synthetic labeled CSI sessions: smooth per-class channel signatures plus
// realistic impairments (per-packet linear-in-k phase errors, amplitude
// noise, sparse spikes, and a high-frequency interference tone), emitted as
// quantized integer I/Q so the parser sees realistic logs.
#pragma once

#include <cstdint>
#include <vector>

#include "csiid/csi.hpp"
#include "csiid/rng.hpp"

namespace csiid {

struct SynthConfig {
    std::size_t classes = 6;
    std::size_t subcarriers = 52;
    double sample_rate_hz = 100.0;
    double duration_s = 150.0;  // per class
    // Correlation length (in subcarriers) of the smooth signature curves.
    std::size_t signature_smoothness = 8;
    double amp_noise_sigma = 0.5;     // raw I/Q units
    double phase_noise_sigma = 0.005;  // radians
    double spike_rate = 0.004;         // per sample per subcarrier
    double spike_magnitude = 25.0;     // raw units, random sign
    double sfo_slope_max = 0.12;   // per-packet slope, radians per subcarrier index
    double cfo_offset_max = 0.5;   // per-packet constant offset, radians
    double interference_hz = 40.0;
    double interference_amp = 3.0;
    double slow_modulation_depth = 0.04;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ClassSignature {
    std::vector<double> amplitude;  // strictly positive, one per subcarrier
    std::vector<double> phase;      // even-symmetric across the index range
};

// Deterministic per (seed, class_id); distinct classes draw from distinct
// substreams.
ClassSignature generate_class_signature(std::size_t class_id, const SynthConfig& cfg);

struct SynthSession {
    CsiSession session;
    // Ground truth of the injected per-packet phase impairments, for
    // calibration diagnostics.
    std::vector<double> injected_slopes;
    std::vector<double> injected_offsets;
};

SynthSession synthesize_session(std::size_t class_id, const SynthConfig& cfg);

// Baseline room response only: smoothly decreasing amplitude across
// subcarriers, no class signature, no slow modulation.
SynthSession synthesize_empty_room(const SynthConfig& cfg);

}  // namespace csiid
