#include "csiid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace csiid {

void SplitFractions::validate() const {
    if (!(train > 0.0 && val > 0.0 && test > 0.0))
        throw InputError("split fractions must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9)
        throw InputError("split fractions must sum to 1");
}

SegmentBounds sequential_split(std::size_t total_rows, const SplitFractions& fractions,
                               std::size_t min_segment_rows) {
    fractions.validate();
    SegmentBounds b;
    b.total = total_rows;
    // The nudge keeps floor() exact when the product is an integer up to
    // rounding of the fraction sum (e.g. fl(0.7 + 0.1) < 0.8).
    auto boundary = [total_rows](double fraction) {
        return static_cast<std::size_t>(
            std::floor(fraction * static_cast<double>(total_rows) + 1e-9));
    };
    b.train_end = boundary(fractions.train);
    b.val_end = boundary(fractions.train + fractions.val);
    const std::size_t train_len = b.train_end;
    const std::size_t val_len = b.val_end - b.train_end;
    const std::size_t test_len = b.total - b.val_end;
    if (train_len < min_segment_rows || val_len < min_segment_rows ||
        test_len < min_segment_rows)
        throw InputError("split segment shorter than one window: " +
                         std::to_string(train_len) + "/" + std::to_string(val_len) +
                         "/" + std::to_string(test_len) + " rows, window " +
                         std::to_string(min_segment_rows));
    return b;
}

std::size_t window_stride(std::size_t window_len, double overlap) {
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw InputError("window overlap must be in [0, 1)");
    const auto stride = static_cast<std::size_t>(
        std::llround(static_cast<double>(window_len) * (1.0 - overlap)));
    return std::max<std::size_t>(stride, 1);
}

std::size_t window_count(std::size_t segment_len, std::size_t window_len,
                         std::size_t stride) {
    if (segment_len < window_len) return 0;
    return (segment_len - window_len) / stride + 1;
}

std::vector<WindowSample> make_windows(const Mat& amplitude, const Mat& phase,
                                       std::size_t row_begin, std::size_t row_end,
                                       std::size_t window_len, double overlap,
                                       int label, std::size_t session_id) {
    if (row_end > amplitude.rows() || amplitude.rows() != phase.rows() ||
        amplitude.cols() != phase.cols())
        throw ShapeError("make_windows: inconsistent segment bounds or shapes");
    const std::size_t len = row_end - row_begin;
    if (len < window_len)
        throw InputError("make_windows: segment of " + std::to_string(len) +
                         " rows shorter than window " + std::to_string(window_len));
    const std::size_t stride = window_stride(window_len, overlap);
    const std::size_t count = window_count(len, window_len, stride);

    std::vector<WindowSample> out;
    out.reserve(count);
    const std::size_t k = amplitude.cols();
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t start = row_begin + w * stride;
        WindowSample s;
        s.amplitude = Mat(window_len, k);
        s.phase = Mat(window_len, k);
        s.label = label;
        s.session_id = session_id;
        s.start_index = start - row_begin;
        for (std::size_t r = 0; r < window_len; ++r)
            for (std::size_t c = 0; c < k; ++c) {
                s.amplitude(r, c) = amplitude(start + r, c);
                s.phase(r, c) = phase(start + r, c);
            }
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

struct Moments {
    double amp_mean = 0.0, amp_std = 1.0;
    double ph_mean = 0.0, ph_std = 1.0;
};

Moments train_moments(const std::vector<WindowSample>& train) {
    double amp_sum = 0.0, ph_sum = 0.0;
    std::size_t n = 0;
    for (const auto& w : train) {
        for (double v : w.amplitude.data()) amp_sum += v;
        for (double v : w.phase.data()) ph_sum += v;
        n += w.amplitude.data().size();
    }
    Moments m;
    if (n == 0) return m;
    m.amp_mean = amp_sum / static_cast<double>(n);
    m.ph_mean = ph_sum / static_cast<double>(n);
    double amp_sq = 0.0, ph_sq = 0.0;
    for (const auto& w : train) {
        for (double v : w.amplitude.data()) amp_sq += (v - m.amp_mean) * (v - m.amp_mean);
        for (double v : w.phase.data()) ph_sq += (v - m.ph_mean) * (v - m.ph_mean);
    }
    m.amp_std = std::max(std::sqrt(amp_sq / static_cast<double>(n)), 1e-12);
    m.ph_std = std::max(std::sqrt(ph_sq / static_cast<double>(n)), 1e-12);
    return m;
}

void apply_moments(std::vector<WindowSample>& split, const Moments& m) {
    for (auto& w : split) {
        for (double& v : w.amplitude.data()) v = (v - m.amp_mean) / m.amp_std;
        for (double& v : w.phase.data()) v = (v - m.ph_mean) / m.ph_std;
    }
}

}  // namespace

WindowedDataset build_dataset(const std::vector<LabeledMatrix>& sessions,
                              const DatasetConfig& cfg) {
    if (sessions.empty()) throw InputError("build_dataset: no sessions");

    int max_label = 0;
    std::set<int> labels;
    for (const auto& s : sessions) {
        if (s.label < 0) throw InputError("build_dataset: unlabeled session");
        labels.insert(s.label);
        max_label = std::max(max_label, s.label);
    }
    if (labels.size() < 2) throw InputError("build_dataset: fewer than 2 classes");
    const std::size_t class_count = static_cast<std::size_t>(max_label) + 1;
    if (labels.size() != class_count)
        throw InputError("build_dataset: class ids must cover [0, N) contiguously");

    WindowedDataset ds;
    ds.class_count = class_count;
    ds.window_len = cfg.window_len;
    ds.overlap = cfg.overlap;
    ds.subcarriers = sessions.front().matrices.amplitude.cols();

    for (std::size_t sid = 0; sid < sessions.size(); ++sid) {
        const auto& s = sessions[sid];
        const Mat& amp = s.matrices.amplitude;
        const Mat& ph = s.matrices.phase;
        if (amp.cols() != ds.subcarriers)
            throw ShapeError("build_dataset: session " + std::to_string(sid) +
                             " has K=" + std::to_string(amp.cols()) + ", expected " +
                             std::to_string(ds.subcarriers));
        const SegmentBounds b =
            sequential_split(amp.rows(), cfg.fractions, cfg.window_len);
        auto append = [&](std::vector<WindowSample>& dst, std::size_t lo,
                          std::size_t hi) {
            auto windows = make_windows(amp, ph, lo, hi, cfg.window_len, cfg.overlap,
                                        s.label, sid);
            for (auto& w : windows) dst.push_back(std::move(w));
        };
        append(ds.train, 0, b.train_end);
        append(ds.val, b.train_end, b.val_end);
        append(ds.test, b.val_end, b.total);
    }

    for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
        std::set<int> seen;
        for (const auto& w : *split) seen.insert(w.label);
        if (seen.size() != class_count)
            throw InputError("build_dataset: a class is missing from a split");
    }

    if (cfg.shuffle_train) {
        Rng rng(cfg.seed);
        rng.shuffle(ds.train);
    }
    if (cfg.normalize) {
        const Moments m = train_moments(ds.train);
        apply_moments(ds.train, m);
        apply_moments(ds.val, m);
        apply_moments(ds.test, m);
    }
    return ds;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest: " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string file, label_s, orient_s;
        std::getline(ss, file, ',');
        std::getline(ss, label_s, ',');
        std::getline(ss, orient_s, ',');
        if (file.empty() || label_s.empty())
            throw InputError("manifest line missing path or label: " + line);
        ManifestEntry e;
        std::filesystem::path p(file);
        e.path = p.is_absolute() ? p.string() : (base / p).string();
        try {
            e.label = std::stoi(label_s);
        } catch (const std::exception&) {
            throw InputError("manifest label is not an integer: " + line);
        }
        if (!orient_s.empty()) e.orientation_deg = std::stoi(orient_s);
        out.push_back(std::move(e));
    }
    if (out.empty()) throw InputError("manifest has no entries: " + path);
    return out;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write manifest: " + path);
    for (const auto& e : entries) {
        out << std::filesystem::path(e.path).filename().string() << "," << e.label;
        if (e.orientation_deg) out << "," << *e.orientation_deg;
        out << "\n";
    }
}

namespace {

constexpr char kCacheMagic[4] = {'C', 'S', 'I', 'W'};
constexpr std::uint32_t kCacheVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ofstream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

float get_f32(std::ifstream& in) {
    const std::uint32_t bits = get_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void write_split(std::ofstream& out, const std::vector<WindowSample>& split) {
    for (const auto& w : split) {
        put_u32(out, static_cast<std::uint32_t>(w.label));
        put_u32(out, static_cast<std::uint32_t>(w.session_id));
        put_u32(out, static_cast<std::uint32_t>(w.start_index));
        for (double v : w.amplitude.data()) put_f32(out, static_cast<float>(v));
        for (double v : w.phase.data()) put_f32(out, static_cast<float>(v));
    }
}

void read_split(std::ifstream& in, std::vector<WindowSample>& split, std::size_t count,
                std::size_t w_len, std::size_t k) {
    split.resize(count);
    for (auto& w : split) {
        w.label = static_cast<int>(get_u32(in));
        w.session_id = get_u32(in);
        w.start_index = get_u32(in);
        w.amplitude = Mat(w_len, k);
        w.phase = Mat(w_len, k);
        for (double& v : w.amplitude.data()) v = get_f32(in);
        for (double& v : w.phase.data()) v = get_f32(in);
    }
}

}  // namespace

void save_dataset_cache(const std::string& path, const WindowedDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write dataset cache: " + path);
    out.write(kCacheMagic, 4);
    put_u32(out, kCacheVersion);
    put_u32(out, static_cast<std::uint32_t>(ds.class_count));
    put_u32(out, static_cast<std::uint32_t>(ds.window_len));
    put_u32(out, static_cast<std::uint32_t>(ds.subcarriers));
    put_f32(out, static_cast<float>(ds.overlap));
    put_u32(out, static_cast<std::uint32_t>(ds.train.size()));
    put_u32(out, static_cast<std::uint32_t>(ds.val.size()));
    put_u32(out, static_cast<std::uint32_t>(ds.test.size()));
    write_split(out, ds.train);
    write_split(out, ds.val);
    write_split(out, ds.test);
    if (!out) throw InputError("dataset cache write failed: " + path);
}

WindowedDataset load_dataset_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open dataset cache: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCacheMagic, 4) != 0)
        throw IntegrityError("dataset cache has wrong magic: " + path);
    const std::uint32_t version = get_u32(in);
    if (version != kCacheVersion)
        throw IntegrityError("unsupported dataset cache version " +
                             std::to_string(version));
    WindowedDataset ds;
    ds.class_count = get_u32(in);
    ds.window_len = get_u32(in);
    ds.subcarriers = get_u32(in);
    ds.overlap = get_f32(in);
    const std::size_t n_train = get_u32(in);
    const std::size_t n_val = get_u32(in);
    const std::size_t n_test = get_u32(in);
    read_split(in, ds.train, n_train, ds.window_len, ds.subcarriers);
    read_split(in, ds.val, n_val, ds.window_len, ds.subcarriers);
    read_split(in, ds.test, n_test, ds.window_len, ds.subcarriers);
    if (!in) throw IntegrityError("dataset cache truncated: " + path);
    return ds;
}

}  // namespace csiid
