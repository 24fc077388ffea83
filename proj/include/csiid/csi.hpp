// CSI packet log ingestion: parse text logs of per-subcarrier I/Q pairs into
// sessions, extract amplitude/phase matrices, and sanity-check sessions.
#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "csiid/common.hpp"

namespace csiid {

constexpr int kUnlabeled = -1;

// One parsed packet: a timestamp plus a complex channel estimate per subcarrier.
struct CsiRecord {
    double timestamp = 0.0;
    std::vector<std::complex<double>> iq;
    // Strictly increasing subcarrier indices, same length as iq.
    std::vector<int> subcarrier_indices;
};

struct CsiSession {
    std::vector<CsiRecord> records;
    double sample_rate_hz = 100.0;
    int label = kUnlabeled;
    std::optional<int> orientation_deg;

    std::size_t subcarrier_count() const {
        return records.empty() ? 0 : records.front().iq.size();
    }
    const std::vector<int>& subcarrier_indices() const {
        static const std::vector<int> empty;
        return records.empty() ? empty : records.front().subcarrier_indices;
    }
};

// Paired T x K amplitude (linear units, >= 0) and phase (radians, (-pi, pi]
// before calibration) matrices. The currency of the preprocessing pipeline.
struct AmplitudePhaseMatrix {
    Mat amplitude;
    Mat phase;
    std::vector<int> subcarrier_indices;
    double sample_rate_hz = 100.0;
};

// Log line layout: "timestamp, i0,q0, i1,q1, ...". ESP32 CSI dumps vary in
// I/Q ordering and header presence, so both are configurable.
struct LogFormat {
    bool imag_first = false;   // false: pairs are (real, imag)
    bool has_header = false;   // skip the first line
    std::size_t expected_k = 0;  // 0 = infer from the first valid line
    // Optional explicit subcarrier indices; when empty a symmetric set
    // excluding DC is assumed (for K=52: -26..-1, 1..26).
    std::vector<int> subcarrier_indices;
};

std::vector<int> default_subcarrier_indices(std::size_t k);

struct ParseStats {
    std::size_t lines_total = 0;
    std::size_t lines_skipped = 0;  // malformed (bad tokens / odd counts)
    std::size_t records = 0;
};

// Parses a CSI log. Records are re-sorted by timestamp (serial logging can
// reorder lines). Throws InputError on: unreadable file, zero valid records,
// inconsistent K between otherwise-valid lines, or >10% malformed lines
// (which usually signals a wrong LogFormat).
CsiSession parse_csi_log(const std::string& path, const LogFormat& format = {},
                         ParseStats* stats = nullptr);

// Writes the same format parse_csi_log reads (round-trip property).
void write_csi_log(const std::string& path, const CsiSession& session,
                   const LogFormat& format = {});

// amplitude = sqrt(re^2 + im^2), phase = atan2(im, re) in (-pi, pi].
// A zero channel estimate yields amplitude 0 and, by convention, phase 0.
AmplitudePhaseMatrix extract_amplitude_phase(const CsiSession& session);

struct SessionGap {
    std::size_t index = 0;  // gap between records[index-1] and records[index]
    double t_before = 0.0;
    double t_after = 0.0;
};

struct SessionReport {
    std::size_t record_count = 0;
    std::size_t subcarriers = 0;
    // Span of timestamps plus one sample period, so an exact-rate session of
    // n packets reports n / sample_rate_hz.
    double duration_s = 0.0;
    double nominal_rate_hz = 0.0;
    double actual_rate_hz = 0.0;
    double rate_deviation_hz = 0.0;
    std::vector<SessionGap> gaps;  // inter-arrival > 3 / sample_rate_hz

    std::string human_readable() const;
    std::string key_value() const;
};

SessionReport validate_session(const CsiSession& session);

}  // namespace csiid
