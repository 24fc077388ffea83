#include "csiid/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace csiid {

const std::vector<ConfigKey>& RunConfig::registry() {
    static const std::vector<ConfigKey> keys = {
        {"seed", "42", "global random seed"},
        {"out", "runs", "output directory root"},
        {"run.name", "", "run subdirectory name (empty: timestamped)"},

        {"synth.classes", "6", "number of synthetic identities"},
        {"synth.subcarriers", "52", "subcarriers per packet"},
        {"sample_rate_hz", "100", "packet rate"},
        {"synth.duration_s", "150", "seconds per class session"},
        {"synth.smoothness", "8", "signature correlation length (subcarriers)"},
        {"synth.amp_noise_sigma", "0.5", "amplitude noise sigma (raw units)"},
        {"synth.phase_noise_sigma", "0.005", "phase noise sigma (radians)"},
        {"synth.spike_rate", "0.004", "spike probability per sample"},
        {"synth.spike_magnitude", "25", "spike magnitude (raw units)"},
        {"synth.sfo_slope_max", "0.12", "max per-packet phase slope (rad/subcarrier)"},
        {"synth.cfo_offset_max", "0.5", "max per-packet phase offset (rad)"},
        {"synth.interference_hz", "40", "interference tone frequency"},
        {"synth.interference_amp", "3", "interference tone amplitude (raw units)"},
        {"synth.slow_modulation_depth", "0.04", "slow amplitude modulation depth"},
        {"synth.empty_room", "false", "also write an empty-room session"},

        {"format.imag_first", "false", "log I/Q pairs are (imag, real)"},
        {"format.has_header", "false", "skip first log line"},
        {"format.k", "0", "expected subcarriers per line (0: infer)"},

        {"hampel.window", "15", "Hampel window length (odd)"},
        {"hampel.beta", "3.0", "Hampel MAD threshold multiplier"},
        {"hampel.alpha", "0.8", "Hampel replacement smoothing factor"},
        {"butterworth.order", "5", "Butterworth order"},
        {"butterworth.cutoff_hz", "10.0", "Butterworth cutoff"},
        {"butterworth.zero_phase", "false", "forward-backward filtering"},
        {"reduce.temporal", "true", "average consecutive sample pairs"},

        {"window.len", "100", "window length in rows"},
        {"window.overlap", "0.5", "fractional overlap between windows"},
        {"window.on_reduced", "true",
         "window the temporally reduced stream (false: skip reduction)"},
        {"split.train", "0.7", "train fraction"},
        {"split.val", "0.1", "validation fraction"},
        {"split.test", "0.2", "test fraction"},
        {"dataset.shuffle", "true", "shuffle train windows (seeded)"},
        {"dataset.normalize", "false", "z-score with train statistics"},
        {"dataset.cache", "", "optional CSIW cache path (load if present, else save)"},

        {"model", "transformer", "transformer | mlp | cnn"},
        {"model.d_model", "32", "embedding width"},
        {"model.heads", "4", "attention heads"},
        {"model.d_ff", "64", "feed-forward width"},
        {"model.dropout", "0.2", "dropout rate"},
        {"model.layers", "1", "encoder layers per branch"},
        {"model.pe", "true", "sinusoidal positional encoding"},
        {"model.dropout_input", "false", "dropout after the input projection"},
        {"attn.scale_full_dmodel", "false",
         "scale attention by sqrt(d_model) instead of per-head sqrt(d_k)"},

        {"train.lr", "0.001", "Adam learning rate"},
        {"train.batch", "32", "batch size"},
        {"train.max_epochs", "50", "epoch cap"},
        {"train.patience", "10", "early-stopping patience (epochs)"},
        {"train.adam_beta1", "0.9", "Adam beta1"},
        {"train.adam_beta2", "0.999", "Adam beta2"},
        {"train.adam_eps", "1e-8", "Adam epsilon"},

        {"heatmap.start_s", "0", "grid start time"},
        {"heatmap.span_s", "2", "grid span in seconds"},
        {"heatmap.preprocessed", "false", "grid from the preprocessed matrices"},
        {"heatmap.pgm", "false", "also write a grayscale PGM raster"},
    };
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& k : registry()) values_[k.name] = k.default_value;
}

bool RunConfig::has_key(const std::string& key) const {
    return values_.count(key) != 0;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw InputError("unknown config key: " + key);
    it->second = value;
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config file " + path + " line " + std::to_string(lineno) +
                             ": expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string RunConfig::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw InputError("unknown config key: " + key);
    return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
    try {
        return std::stoll(get_string(key));
    } catch (const std::exception&) {
        throw InputError("config key " + key + " is not an integer: " +
                         get_string(key));
    }
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
    const std::int64_t v = get_int(key);
    if (v < 0) throw InputError("config key " + key + " must be nonnegative");
    return static_cast<std::uint64_t>(v);
}

double RunConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get_string(key));
    } catch (const std::exception&) {
        throw InputError("config key " + key + " is not a number: " + get_string(key));
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string v = get_string(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InputError("config key " + key + " is not a boolean: " + v);
}

std::string RunConfig::effective_text() const {
    std::ostringstream os;
    for (const auto& [key, value] : values_) os << key << "=" << value << "\n";
    return os.str();
}

}  // namespace csiid
