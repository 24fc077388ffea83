// csiid: CSI person-identification pipeline CLI.
// Subcommands: synth, ingest, preprocess, train, eval, heatmap.
// Exit codes: 0 success, 2 input error, 3 shape/config mismatch,
// 4 integrity failure, 1 internal error.
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "csiid/checkpoint.hpp"
#include "csiid/pipeline.hpp"

namespace fs = std::filesystem;
using namespace csiid;

namespace {

template <typename F>
auto with_stage(const char* stage, F&& fn) {
    try {
        return fn();
    } catch (const InputError& e) {
        throw InputError(std::string(stage) + ": " + e.what());
    } catch (const ShapeError& e) {
        throw ShapeError(std::string(stage) + ": " + e.what());
    } catch (const IntegrityError& e) {
        throw IntegrityError(std::string(stage) + ": " + e.what());
    }
}

fs::path make_run_dir(const RunConfig& cfg) {
    const fs::path root = cfg.get_string("out");
    std::string name = cfg.get_string("run.name");
    if (name.empty()) {
        const std::time_t now = std::time(nullptr);
        std::tm tm_buf{};
        localtime_r(&now, &tm_buf);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "run-%Y%m%d-%H%M%S", &tm_buf);
        name = stamp;
        fs::path candidate = root / name;
        for (int i = 1; fs::exists(candidate); ++i)
            candidate = root / (name + "-" + std::to_string(i));
        name = candidate.filename().string();
    }
    const fs::path dir = root / name;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory " + dir.string() + ": " +
                             ec.message());
    return dir;
}

void echo_config(const RunConfig& cfg) {
    std::cout << "effective configuration:\n" << cfg.effective_text();
}

void write_config(const fs::path& dir, const RunConfig& cfg) {
    std::ofstream out(dir / "config.txt");
    out << cfg.effective_text();
}

void write_csv(const fs::path& path, const Mat& m) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    char buf[32];
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.6g", m(r, c));
            out << (c ? "," : "") << buf;
        }
        out << "\n";
    }
}

void write_pgm(const fs::path& path, const Mat& m) {
    double lo = m.data().empty() ? 0.0 : m.data()[0];
    double hi = lo;
    for (double v : m.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << "P5\n" << m.cols() << " " << m.rows() << "\n255\n";
    for (double v : m.data())
        out.put(static_cast<char>(
            static_cast<unsigned char>(std::lround(255.0 * (v - lo) / span))));
}

int cmd_synth(const RunConfig& cfg) {
    const fs::path dir = make_run_dir(cfg);
    write_config(dir, cfg);
    const SynthConfig sc = synth_config_from(cfg);

    std::vector<ManifestEntry> entries;
    for (std::size_t c = 0; c < sc.classes; ++c) {
        const SynthSession synth = synthesize_session(c, sc);
        const fs::path log = dir / ("class" + std::to_string(c) + ".log");
        write_csi_log(log.string(), synth.session);
        entries.push_back({log.string(), static_cast<int>(c), 0});
        std::cout << "class " << c << ": " << log.string() << "\n";
    }
    if (cfg.get_bool("synth.empty_room")) {
        const fs::path log = dir / "empty_room.log";
        write_csi_log(log.string(), synthesize_empty_room(sc).session);
        std::cout << "empty room: " << log.string() << "\n";
    }
    const fs::path manifest = dir / "manifest.csv";
    write_manifest(manifest.string(), entries);
    std::cout << "manifest: " << manifest.string() << "\n";
    return 0;
}

int cmd_ingest(const RunConfig& cfg, const std::string& log_path) {
    ParseStats stats;
    CsiSession session = parse_csi_log(log_path, log_format_from(cfg), &stats);
    session.sample_rate_hz = cfg.get_double("sample_rate_hz");
    const SessionReport report = validate_session(session);
    std::cout << report.human_readable() << "---\n"
              << report.key_value() << "lines_total=" << stats.lines_total << "\n"
              << "lines_skipped=" << stats.lines_skipped << "\n";
    return 0;
}

int cmd_preprocess(const RunConfig& cfg, const std::string& log_path) {
    const fs::path dir = make_run_dir(cfg);
    write_config(dir, cfg);
    CsiSession session = parse_csi_log(log_path, log_format_from(cfg));
    session.sample_rate_hz = cfg.get_double("sample_rate_hz");
    const AmplitudePhaseMatrix processed =
        preprocess_session(extract_amplitude_phase(session), preprocess_config_from(cfg));
    write_csv(dir / "amplitude.csv", processed.amplitude);
    write_csv(dir / "phase.csv", processed.phase);
    std::cout << "preprocessed " << processed.amplitude.rows() << "x"
              << processed.amplitude.cols() << " at " << processed.sample_rate_hz
              << " Hz\n"
              << "amplitude: " << (dir / "amplitude.csv").string() << "\n"
              << "phase:     " << (dir / "phase.csv").string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& manifest) {
    const fs::path dir = make_run_dir(cfg);
    write_config(dir, cfg);

    WindowedDataset ds;
    const std::string cache = cfg.get_string("dataset.cache");
    if (!cache.empty() && fs::exists(cache)) {
        ds = with_stage("dataset", [&] { return load_dataset_cache(cache); });
    } else {
        ds = with_stage("dataset",
                        [&] { return dataset_from_manifest(manifest, cfg); });
        if (!cache.empty()) save_dataset_cache(cache, ds);
    }
    std::cout << "dataset: " << ds.train.size() << " train / " << ds.val.size()
              << " val / " << ds.test.size() << " test windows, " << ds.class_count
              << " classes\n";

    const TransformerConfig mc =
        model_config_from(cfg, ds.window_len, ds.subcarriers, ds.class_count);
    auto model = make_model(cfg.get_string("model"), mc, cfg.get_uint("seed"));
    const TrainConfig tc = train_config_from(cfg);

    const TrainResult result =
        with_stage("train", [&] { return train_loop(*model, ds, tc); });
    const MetricsReport report =
        with_stage("evaluate", [&] { return evaluate_metrics(*model, ds.test); });

    save_checkpoint((dir / "checkpoint.csim").string(), *model);
    write_history_csv((dir / "history.csv").string(), result.history);
    const std::string json =
        metrics_to_json(report, model->model_type(), result, cfg.get_uint("seed"));
    std::ofstream(dir / "metrics.json") << json << "\n";
    const std::string table = metrics_table(report, model->model_type());
    std::ofstream(dir / "table.txt") << table;

    std::cout << table << "epochs run: " << result.epochs_run << " (best epoch "
              << result.best_epoch << ", val accuracy " << result.best_val_accuracy
              << ")\n"
              << "artifacts in " << dir.string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
             const std::string& manifest) {
    const CheckpointData data = read_checkpoint(checkpoint);
    auto model = restore_model(data);
    const WindowedDataset ds =
        with_stage("dataset", [&] { return dataset_from_manifest(manifest, cfg); });
    if (ds.window_len != data.config.window_len ||
        ds.subcarriers != data.config.subcarriers ||
        ds.class_count != data.config.classes)
        throw ShapeError("checkpoint expects W=" +
                         std::to_string(data.config.window_len) + " K=" +
                         std::to_string(data.config.subcarriers) + " N=" +
                         std::to_string(data.config.classes) + ", dataset has W=" +
                         std::to_string(ds.window_len) + " K=" +
                         std::to_string(ds.subcarriers) + " N=" +
                         std::to_string(ds.class_count));

    const MetricsReport report = evaluate_metrics(*model, ds.test);
    TrainResult no_training;
    std::cout << metrics_table(report, model->model_type())
              << metrics_to_json(report, model->model_type(), no_training,
                                 cfg.get_uint("seed"))
              << "\n";
    return 0;
}

int cmd_heatmap(const RunConfig& cfg, const std::string& log_path) {
    const fs::path dir = make_run_dir(cfg);
    write_config(dir, cfg);
    CsiSession session = parse_csi_log(log_path, log_format_from(cfg));
    session.sample_rate_hz = cfg.get_double("sample_rate_hz");
    AmplitudePhaseMatrix m = extract_amplitude_phase(session);
    if (cfg.get_bool("heatmap.preprocessed"))
        m = preprocess_session(m, preprocess_config_from(cfg));

    const double start_s = cfg.get_double("heatmap.start_s");
    const double span_s = cfg.get_double("heatmap.span_s");
    const auto start_row =
        static_cast<std::size_t>(std::llround(start_s * m.sample_rate_hz));
    const auto rows = static_cast<std::size_t>(std::llround(span_s * m.sample_rate_hz));
    if (start_s < 0 || span_s <= 0 || rows == 0 ||
        start_row + rows > m.amplitude.rows())
        throw InputError("heatmap span [" + std::to_string(start_s) + ", " +
                         std::to_string(start_s + span_s) + ") s outside session of " +
                         std::to_string(m.amplitude.rows()) + " rows at " +
                         std::to_string(m.sample_rate_hz) + " Hz");

    Mat grid(rows, m.amplitude.cols());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < m.amplitude.cols(); ++c)
            grid(r, c) = m.amplitude(start_row + r, c);

    write_csv(dir / "heatmap.csv", grid);
    std::cout << "grid: " << grid.rows() << "x" << grid.cols() << " -> "
              << (dir / "heatmap.csv").string() << "\n"
              << "grid_variance=" << variance(grid.data()) << "\n";
    if (cfg.get_bool("heatmap.pgm")) {
        write_pgm(dir / "heatmap.pgm", grid);
        std::cout << "raster: " << (dir / "heatmap.pgm").string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CSI person-identification pipeline"};
    app.require_subcommand(1);

    std::string config_file;
    app.add_option("--config", config_file, "key=value configuration file");
    std::map<std::string, std::string> staged;
    for (const auto& key : RunConfig::registry()) {
        staged[key.name] = key.default_value;
        app.add_option("--" + key.name, staged[key.name], key.help);
    }

    auto* synth = app.add_subcommand("synth", "generate synthetic CSI session logs");
    synth->fallthrough();

    std::string ingest_log;
    auto* ingest = app.add_subcommand("ingest", "parse and validate a CSI log");
    ingest->add_option("--log", ingest_log, "CSI log file")->required();
    ingest->fallthrough();

    std::string preprocess_log;
    auto* preprocess = app.add_subcommand("preprocess", "sanitize a CSI log");
    preprocess->add_option("--log", preprocess_log, "CSI log file")->required();
    preprocess->fallthrough();

    std::string train_manifest;
    auto* train = app.add_subcommand("train", "train and evaluate a classifier");
    train->add_option("--manifest", train_manifest, "session manifest")->required();
    train->fallthrough();

    std::string eval_checkpoint, eval_manifest;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval->add_option("--manifest", eval_manifest, "session manifest")->required();
    eval->fallthrough();

    std::string heatmap_log;
    auto* heatmap = app.add_subcommand("heatmap", "export a time x subcarrier grid");
    heatmap->add_option("--log", heatmap_log, "CSI log file")->required();
    heatmap->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg;
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& key : RunConfig::registry())
            if (app.count("--" + key.name) > 0) cfg.set(key.name, staged[key.name]);
        echo_config(cfg);

        if (synth->parsed()) return cmd_synth(cfg);
        if (ingest->parsed()) return cmd_ingest(cfg, ingest_log);
        if (preprocess->parsed()) return cmd_preprocess(cfg, preprocess_log);
        if (train->parsed()) return cmd_train(cfg, train_manifest);
        if (eval->parsed()) return cmd_eval(cfg, eval_checkpoint, eval_manifest);
        if (heatmap->parsed()) return cmd_heatmap(cfg, heatmap_log);
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
