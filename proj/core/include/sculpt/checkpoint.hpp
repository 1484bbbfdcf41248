#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sculpt/mask.hpp"
#include "sculpt/model.hpp"
#include "sculpt/params.hpp"

namespace sculpt {

// Snapshot of a training run. Layout on disk is documented in docs/checkpoint_format.md.
struct Checkpoint {
    ModelSpec spec;
    std::uint64_t seed = 0;
    ParamVector params;
    Mask mask;
    std::vector<double> velocity;
    std::uint64_t epoch = 0;
    std::uint64_t cycle = 0;
    std::string schedule;
    std::string criterion;
};

constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws FormatError on bad magic, unsupported version, truncation, a layout that
// does not match the embedded model spec, or mask counts that fail the redundancy check.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

}  // namespace sculpt
