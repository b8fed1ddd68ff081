#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "icpipe/convnet.hpp"
#include "icpipe/datagen.hpp"
#include "icpipe/filtering.hpp"
#include "icpipe/forest.hpp"
#include "icpipe/segmentation.hpp"

namespace icpipe::config {

struct GenSettings {
    datagen::DatasetGenParams reference;
    datagen::DatasetGenParams target;
    datagen::ShiftDelta shift;
};

// Every knob of the pipeline, layered: defaults < config file < environment
// (ICPIPE_SEED, ICPIPE_WORKERS) < command-line flags / --set overrides.
struct RunConfig {
    std::uint64_t seed = 42;
    int workers = 2;
    segmentation::SegmentationConfig seg;
    filtering::FilterConfig filter;
    model::ConvNetConfig net;
    int context_side = 256;
    model::TrainConfig train;
    double val_ratio = 0.8;  // patient-level carve of the training split
    model::AugmentConfig augment;
    model::ForestConfig forest;
    GenSettings gen;

    nlohmann::json snapshot;  // fully merged JSON, for run-config.json
};

nlohmann::json default_config_json();

// Loads and layers the configuration. Unknown keys and type mismatches in
// the file or overrides raise ConfigError. `overrides` entries look like
// "train.batch_size=16".
RunConfig load_config(const std::filesystem::path& config_file,
                      const std::vector<std::string>& overrides);
RunConfig config_from_json(const nlohmann::json& merged);

void write_run_config(const RunConfig& cfg, const std::string& command,
                      const std::filesystem::path& path);

}  // namespace icpipe::config
