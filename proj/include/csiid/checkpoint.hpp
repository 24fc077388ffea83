// Model checkpoint file: magic "CSIM", format version, config block, named
// parameter list (32-bit little-endian values), CRC32 integrity checksum.
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "csiid/model.hpp"

namespace csiid {

std::uint32_t crc32(const unsigned char* data, std::size_t len);

struct CheckpointData {
    std::string model_type;
    TransformerConfig config;
    struct Param {
        std::string name;
        ad::Shape shape;
        std::vector<double> values;
    };
    std::vector<Param> params;
};

void save_checkpoint(const std::string& path, Classifier& model);

// Throws IntegrityError on bad magic, version, or checksum.
CheckpointData read_checkpoint(const std::string& path);

// Builds the model and installs all stored parameters (shape-checked).
std::unique_ptr<Classifier> restore_model(const CheckpointData& data);

}  // namespace csiid
