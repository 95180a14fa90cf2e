#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "tabitd/encoder.hpp"
#include "tabitd/fusion.hpp"

namespace tabitd::model_io {

struct ModelPhase {
    bool pretrained = false; // masked-reconstruction pretraining ran
    bool supervised = false; // supervised training ran
};

/// Everything a model artifact persists: the fused schema it was trained
/// against (fingerprint-gated at load), the encoder with its parameters and
/// BN statistics, the phase flags, and the run provenance.
struct ModelBundle {
    fusion::FusionSchema schema;
    encoder::TabnetModel model;
    ModelPhase phase;
    std::uint64_t seed = 0;
    std::string config_echo; // canonical JSON of the resolved run configuration
};

/// Binary container: magic "TIMD", u32 version, schema JSON + its fingerprint,
/// phase flags, seed, config echo, encoder config, parameter tensors and BN
/// running statistics in the parameters' canonical visit order. Little-endian.
void write_model(std::ostream& os, const ModelBundle& b);
ModelBundle read_model(std::istream& is);

void save_model(const ModelBundle& b, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

/// Guard used before any inference against a dataset: throws
/// FingerprintMismatchError when the dataset was fused under a different
/// schema than the model was trained on.
void require_same_schema(const ModelBundle& b, const fusion::FusionSchema& dataset_schema);

} // namespace tabitd::model_io
