#include "csiid/pipeline.hpp"

namespace csiid {

LogFormat log_format_from(const RunConfig& cfg) {
    LogFormat f;
    f.imag_first = cfg.get_bool("format.imag_first");
    f.has_header = cfg.get_bool("format.has_header");
    f.expected_k = cfg.get_uint("format.k");
    return f;
}

PreprocessConfig preprocess_config_from(const RunConfig& cfg) {
    PreprocessConfig p;
    // Windowing on the unreduced stream means skipping reduction entirely.
    p.reduce_temporal =
        cfg.get_bool("reduce.temporal") && cfg.get_bool("window.on_reduced");
    p.hampel.window = cfg.get_uint("hampel.window");
    p.hampel.beta = cfg.get_double("hampel.beta");
    p.hampel.alpha = cfg.get_double("hampel.alpha");
    p.butterworth_order = cfg.get_uint("butterworth.order");
    p.butterworth_cutoff_hz = cfg.get_double("butterworth.cutoff_hz");
    p.butterworth_zero_phase = cfg.get_bool("butterworth.zero_phase");
    return p;
}

DatasetConfig dataset_config_from(const RunConfig& cfg) {
    DatasetConfig d;
    d.window_len = cfg.get_uint("window.len");
    d.overlap = cfg.get_double("window.overlap");
    d.fractions.train = cfg.get_double("split.train");
    d.fractions.val = cfg.get_double("split.val");
    d.fractions.test = cfg.get_double("split.test");
    d.shuffle_train = cfg.get_bool("dataset.shuffle");
    d.normalize = cfg.get_bool("dataset.normalize");
    d.seed = cfg.get_uint("seed");
    return d;
}

SynthConfig synth_config_from(const RunConfig& cfg) {
    SynthConfig s;
    s.classes = cfg.get_uint("synth.classes");
    s.subcarriers = cfg.get_uint("synth.subcarriers");
    s.sample_rate_hz = cfg.get_double("sample_rate_hz");
    s.duration_s = cfg.get_double("synth.duration_s");
    s.signature_smoothness = cfg.get_uint("synth.smoothness");
    s.amp_noise_sigma = cfg.get_double("synth.amp_noise_sigma");
    s.phase_noise_sigma = cfg.get_double("synth.phase_noise_sigma");
    s.spike_rate = cfg.get_double("synth.spike_rate");
    s.spike_magnitude = cfg.get_double("synth.spike_magnitude");
    s.sfo_slope_max = cfg.get_double("synth.sfo_slope_max");
    s.cfo_offset_max = cfg.get_double("synth.cfo_offset_max");
    s.interference_hz = cfg.get_double("synth.interference_hz");
    s.interference_amp = cfg.get_double("synth.interference_amp");
    s.slow_modulation_depth = cfg.get_double("synth.slow_modulation_depth");
    s.seed = cfg.get_uint("seed");
    return s;
}

TrainConfig train_config_from(const RunConfig& cfg) {
    TrainConfig t;
    t.lr = cfg.get_double("train.lr");
    t.batch = cfg.get_uint("train.batch");
    t.max_epochs = cfg.get_uint("train.max_epochs");
    t.patience = cfg.get_uint("train.patience");
    t.adam_beta1 = cfg.get_double("train.adam_beta1");
    t.adam_beta2 = cfg.get_double("train.adam_beta2");
    t.adam_eps = cfg.get_double("train.adam_eps");
    t.seed = cfg.get_uint("seed");
    return t;
}

TransformerConfig model_config_from(const RunConfig& cfg, std::size_t window_len,
                                    std::size_t subcarriers, std::size_t classes) {
    TransformerConfig m;
    m.d_model = cfg.get_uint("model.d_model");
    m.heads = cfg.get_uint("model.heads");
    m.d_ff = cfg.get_uint("model.d_ff");
    m.dropout = cfg.get_double("model.dropout");
    m.encoder_layers = cfg.get_uint("model.layers");
    m.positional_encoding = cfg.get_bool("model.pe");
    m.dropout_after_input = cfg.get_bool("model.dropout_input");
    m.scale_full_dmodel = cfg.get_bool("attn.scale_full_dmodel");
    m.window_len = window_len;
    m.subcarriers = subcarriers;
    m.classes = classes;
    return m;
}

WindowedDataset dataset_from_manifest(const std::string& manifest_path,
                                      const RunConfig& cfg) {
    const auto entries = read_manifest(manifest_path);
    const LogFormat format = log_format_from(cfg);
    const PreprocessConfig pre = preprocess_config_from(cfg);

    std::vector<LabeledMatrix> sessions;
    sessions.reserve(entries.size());
    const double rate_hz = cfg.get_double("sample_rate_hz");
    for (const auto& e : entries) {
        CsiSession session = parse_csi_log(e.path, format);
        session.sample_rate_hz = rate_hz;
        session.label = e.label;
        session.orientation_deg = e.orientation_deg;
        LabeledMatrix lm;
        lm.matrices = preprocess_session(extract_amplitude_phase(session), pre);
        lm.label = e.label;
        sessions.push_back(std::move(lm));
    }
    return build_dataset(sessions, dataset_config_from(cfg));
}

}  // namespace csiid
