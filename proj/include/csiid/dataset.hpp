// Sequential train/val/test splitting, sliding-window extraction, and
// labeled dataset assembly, plus the manifest and binary cache formats.
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "csiid/common.hpp"
#include "csiid/csi.hpp"
#include "csiid/rng.hpp"

namespace csiid {

struct WindowSample {
    Mat amplitude;  // W x K
    Mat phase;      // W x K
    int label = 0;
    std::size_t session_id = 0;
    std::size_t start_index = 0;  // row offset within the source segment's split
};

struct SplitFractions {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;

    void validate() const;
};

struct SegmentBounds {
    std::size_t train_end = 0;  // rows [0, train_end)
    std::size_t val_end = 0;    // rows [train_end, val_end); test = [val_end, total)
    std::size_t total = 0;
};

// Boundaries at floor(f_train * total) and floor((f_train + f_val) * total).
// Throws InputError when any resulting segment is shorter than min_segment_rows.
SegmentBounds sequential_split(std::size_t total_rows, const SplitFractions& fractions,
                               std::size_t min_segment_rows);

// Stride is window_len * (1 - overlap); count = floor((L - W) / stride) + 1.
std::size_t window_stride(std::size_t window_len, double overlap);
std::size_t window_count(std::size_t segment_len, std::size_t window_len,
                         std::size_t stride);

// Cuts windows from rows [row_begin, row_end) of the paired matrices.
std::vector<WindowSample> make_windows(const Mat& amplitude, const Mat& phase,
                                       std::size_t row_begin, std::size_t row_end,
                                       std::size_t window_len, double overlap,
                                       int label, std::size_t session_id);

struct WindowedDataset {
    std::vector<WindowSample> train;
    std::vector<WindowSample> val;
    std::vector<WindowSample> test;
    std::size_t class_count = 0;
    std::size_t window_len = 0;
    std::size_t subcarriers = 0;
    double overlap = 0.5;
};

struct DatasetConfig {
    std::size_t window_len = 100;
    double overlap = 0.5;
    SplitFractions fractions;
    bool shuffle_train = true;
    std::uint64_t seed = 0;
    bool normalize = false;  // z-score with train statistics, off by default
};

struct LabeledMatrix {
    AmplitudePhaseMatrix matrices;
    int label = 0;
};

// Split-then-window per session (split first prevents leakage through
// overlapping windows). Requires >= 2 classes and every class present in
// every split. Train order is shuffled when configured (seeded); val/test
// keep source order.
WindowedDataset build_dataset(const std::vector<LabeledMatrix>& sessions,
                              const DatasetConfig& cfg);

// Manifest: one line per session, "path,label,orientation" (orientation
// optional). Paths are resolved relative to the manifest's directory.
struct ManifestEntry {
    std::string path;
    int label = 0;
    std::optional<int> orientation_deg;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Binary cache: magic "CSIW", version, dimensions, little-endian f32 payload.
void save_dataset_cache(const std::string& path, const WindowedDataset& ds);
WindowedDataset load_dataset_cache(const std::string& path);

}  // namespace csiid
