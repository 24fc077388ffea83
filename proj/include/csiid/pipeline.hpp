// Glue between the flat run configuration and the typed module configs, and
// the manifest -> ingest -> preprocess -> dataset flow shared by the CLI and
// the test suites.
#pragma once

#include <string>

#include "csiid/config.hpp"
#include "csiid/dataset.hpp"
#include "csiid/model.hpp"
#include "csiid/preprocess.hpp"
#include "csiid/synth.hpp"
#include "csiid/train.hpp"

namespace csiid {

LogFormat log_format_from(const RunConfig& cfg);
PreprocessConfig preprocess_config_from(const RunConfig& cfg);
DatasetConfig dataset_config_from(const RunConfig& cfg);
SynthConfig synth_config_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig& cfg);
TransformerConfig model_config_from(const RunConfig& cfg, std::size_t window_len,
                                    std::size_t subcarriers, std::size_t classes);

// Parses and preprocesses every manifest session, then splits and windows.
WindowedDataset dataset_from_manifest(const std::string& manifest_path,
                                      const RunConfig& cfg);

}  // namespace csiid
