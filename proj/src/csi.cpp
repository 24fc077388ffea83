#include "csiid/csi.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace csiid {

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) {
        const double d = x - m;
        s += d * d;
    }
    return s / static_cast<double>(v.size());
}

std::vector<int> default_subcarrier_indices(std::size_t k) {
    std::vector<int> out;
    out.reserve(k);
    if (k % 2 == 0) {
        const int half = static_cast<int>(k) / 2;
        for (int i = -half; i <= half; ++i)
            if (i != 0) out.push_back(i);
    } else {
        const int half = static_cast<int>(k) / 2;
        for (int i = -half; i <= half; ++i) out.push_back(i);
    }
    return out;
}

namespace {

// Tokenizes one line into doubles, separated by commas and/or spaces.
// Returns false on any unparseable token.
bool tokenize_numbers(const std::string& line, std::vector<double>& out) {
    out.clear();
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
        while (p < end && (*p == ',' || *p == ' ' || *p == '\t' || *p == '\r')) ++p;
        if (p >= end) break;
        double value = 0.0;
        auto [next, ec] = std::from_chars(p, end, value);
        if (ec != std::errc()) return false;
        out.push_back(value);
        p = next;
    }
    return true;
}

bool looks_numeric(const std::string& line) {
    for (char c : line) {
        if (c == '#') return false;
        if ((c >= '0' && c <= '9') || c == '-' || c == '+' || c == '.') return true;
        if (c == ',' || c == ' ' || c == '\t' || c == '\r') continue;
        return false;
    }
    return false;
}

}  // namespace

CsiSession parse_csi_log(const std::string& path, const LogFormat& format,
                         ParseStats* stats) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open CSI log: " + path);

    CsiSession session;
    ParseStats local;
    std::vector<double> nums;
    std::size_t k = format.expected_k;
    std::vector<int> indices = format.subcarrier_indices;

    std::string line;
    bool first_line = true;
    while (std::getline(in, line)) {
        if (first_line) {
            first_line = false;
            if (format.has_header) continue;
        }
        if (line.empty() || line[0] == '#') continue;
        ++local.lines_total;

        if (!looks_numeric(line) || !tokenize_numbers(line, nums) || nums.size() < 3 ||
            nums.size() % 2 == 0) {
            // A valid line has a timestamp plus 2K values: odd token count.
            ++local.lines_skipped;
            continue;
        }
        const std::size_t line_k = (nums.size() - 1) / 2;
        if (k == 0) {
            k = line_k;
        } else if (line_k != k) {
            throw InputError("inconsistent subcarrier count in " + path + ": expected " +
                             std::to_string(k) + ", line has " + std::to_string(line_k));
        }
        if (indices.empty()) indices = default_subcarrier_indices(k);

        CsiRecord rec;
        rec.timestamp = nums[0];
        rec.iq.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            const double a = nums[1 + 2 * i];
            const double b = nums[2 + 2 * i];
            rec.iq.emplace_back(format.imag_first ? b : a, format.imag_first ? a : b);
        }
        rec.subcarrier_indices = indices;
        session.records.push_back(std::move(rec));
    }

    local.records = session.records.size();
    if (stats) *stats = local;

    if (session.records.empty()) throw InputError("zero valid records in " + path);
    if (local.lines_skipped * 10 > local.lines_total)
        throw InputError("more than 10% malformed lines in " + path +
                         " (check the log format configuration): " +
                         std::to_string(local.lines_skipped) + "/" +
                         std::to_string(local.lines_total));

    std::stable_sort(session.records.begin(), session.records.end(),
                     [](const CsiRecord& a, const CsiRecord& b) {
                         return a.timestamp < b.timestamp;
                     });
    return session;
}

void write_csi_log(const std::string& path, const CsiSession& session,
                   const LogFormat& format) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open for writing: " + path);
    char buf[32];
    for (const CsiRecord& rec : session.records) {
        std::snprintf(buf, sizeof(buf), "%.3f", rec.timestamp);
        out << buf;
        for (const auto& z : rec.iq) {
            const long long re = static_cast<long long>(std::llround(z.real()));
            const long long im = static_cast<long long>(std::llround(z.imag()));
            if (format.imag_first)
                out << ", " << im << "," << re;
            else
                out << ", " << re << "," << im;
        }
        out << "\n";
    }
    if (!out) throw InputError("write failed: " + path);
}

AmplitudePhaseMatrix extract_amplitude_phase(const CsiSession& session) {
    const std::size_t t_len = session.records.size();
    const std::size_t k = session.subcarrier_count();
    AmplitudePhaseMatrix out;
    out.amplitude = Mat(t_len, k);
    out.phase = Mat(t_len, k);
    out.subcarrier_indices = session.subcarrier_indices();
    out.sample_rate_hz = session.sample_rate_hz;
    for (std::size_t t = 0; t < t_len; ++t) {
        const auto& iq = session.records[t].iq;
        for (std::size_t c = 0; c < k; ++c) {
            const double re = iq[c].real();
            const double im = iq[c].imag();
            out.amplitude(t, c) = std::sqrt(re * re + im * im);
            out.phase(t, c) = (re == 0.0 && im == 0.0) ? 0.0 : std::atan2(im, re);
        }
    }
    return out;
}

SessionReport validate_session(const CsiSession& session) {
    SessionReport rep;
    rep.record_count = session.records.size();
    rep.subcarriers = session.subcarrier_count();
    rep.nominal_rate_hz = session.sample_rate_hz;
    if (session.records.size() < 2) return rep;

    const double t0 = session.records.front().timestamp;
    const double t1 = session.records.back().timestamp;
    const double span = t1 - t0;
    rep.duration_s = span + 1.0 / session.sample_rate_hz;
    if (span > 0.0)
        rep.actual_rate_hz = static_cast<double>(session.records.size() - 1) / span;
    rep.rate_deviation_hz = rep.actual_rate_hz - rep.nominal_rate_hz;

    const double gap_threshold = 3.0 / session.sample_rate_hz;
    for (std::size_t i = 1; i < session.records.size(); ++i) {
        const double prev = session.records[i - 1].timestamp;
        const double cur = session.records[i].timestamp;
        if (cur - prev > gap_threshold) rep.gaps.push_back({i, prev, cur});
    }
    return rep;
}

std::string SessionReport::human_readable() const {
    std::ostringstream os;
    os << "records:        " << record_count << "\n"
       << "subcarriers:    " << subcarriers << "\n"
       << "duration:       " << duration_s << " s\n"
       << "nominal rate:   " << nominal_rate_hz << " Hz\n"
       << "actual rate:    " << actual_rate_hz << " Hz (deviation "
       << rate_deviation_hz << " Hz)\n"
       << "gaps (>3x period): " << gaps.size() << "\n";
    std::size_t shown = 0;
    for (const auto& g : gaps) {
        if (++shown > 10) {
            os << "  ... " << (gaps.size() - 10) << " more\n";
            break;
        }
        os << "  at record " << g.index << ": " << g.t_before << " -> " << g.t_after
           << " s\n";
    }
    return os.str();
}

std::string SessionReport::key_value() const {
    std::ostringstream os;
    os << "records=" << record_count << "\n"
       << "subcarriers=" << subcarriers << "\n"
       << "duration_s=" << duration_s << "\n"
       << "nominal_rate_hz=" << nominal_rate_hz << "\n"
       << "actual_rate_hz=" << actual_rate_hz << "\n"
       << "rate_deviation_hz=" << rate_deviation_hz << "\n"
       << "gap_count=" << gaps.size() << "\n";
    return os.str();
}

}  // namespace csiid
