#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sculpt/data.hpp"
#include "sculpt/pipelines.hpp"

namespace sculpt {

struct DataSpec {
    std::string kind = "two_moons";  // two_moons | blobs | idx
    std::size_t n = 1000;            // synthetic sets
    double noise = 0.1;              // two_moons noise sd
    std::vector<std::vector<double>> centers{{-1.0, -1.0}, {1.0, 1.0}};  // blobs
    double sd = 0.5;                 // blobs
    double test_fraction = 0.2;      // split for synthetic sets and idx without test files
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    std::size_t train_size = 0;  // 0: all
    std::size_t test_size = 0;
    double label_noise = 0.0;
    bool standardize = true;
    std::uint64_t seed = 0;

    friend bool operator==(const DataSpec&, const DataSpec&) = default;
};

struct AnalysisSpec {
    std::filesystem::path run_dir;  // empty: the run directory of each seed
    std::size_t lmc_points = 21;
    std::filesystem::path lmc_a, lmc_b;  // explicit pair; otherwise consecutive cycle checkpoints
    std::vector<std::filesystem::path> compare;  // run dirs whose final checkpoints are compared by sign overlap
    std::size_t hessian_samples = 256;
    std::size_t hessian_iters = 100;
    double hessian_tol = 1e-6;

    friend bool operator==(const AnalysisSpec&, const AnalysisSpec&) = default;
};

struct RunConfig {
    std::string name = "run";
    PipelineKind pipeline = PipelineKind::train;
    PipelineConfig pipe;  // seed and out_dir are filled per run
    DataSpec data;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path out = "runs";
    AnalysisSpec analysis;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Grammar (see docs/config.md): one `key = value` per line, `#` starts a comment,
// `[section]` prefixes following keys with `section.`. Unknown keys, duplicates and
// out-of-range values raise ConfigError naming the key.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

// Every key with its value, sorted by key. Reparses to an equal RunConfig.
std::string echo_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

// Builds the train/test sets described by `spec` (standardized, label noise applied).
TrainTest load_data(const DataSpec& spec);

}  // namespace sculpt
