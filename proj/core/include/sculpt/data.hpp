#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sculpt/tensor.hpp"

namespace sculpt {

enum class Split { train, test };

// Samples along the leading axis of `inputs`; per-sample layout is the remaining shape
// (features, or H x W x C for images).
struct Dataset {
    Tensor inputs;
    std::vector<int> labels;
    std::size_t classes = 0;
    Split split = Split::train;
    std::string provenance;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t features() const { return size() ? inputs.numel() / size() : 0; }

    // Throws DataError on an empty set, a label outside [0, classes), non-finite inputs,
    // or a sample count that disagrees with the input tensor.
    void validate() const;
};

struct TrainTest {
    Dataset train;
    Dataset test;
};

// One minibatch: inputs flattened to [b, features]; labels as float64 class indices
// so they can be bound as a graph input.
struct Batch {
    Tensor inputs;
    Tensor labels;
    std::size_t size() const { return labels.numel(); }
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch full_batch(const Dataset& data);

Dataset gen_two_moons(std::size_t n, double noise_sd, std::uint64_t seed);
Dataset gen_gaussian_blobs(std::size_t n, const std::vector<std::vector<double>>& centers, double sd,
                           std::uint64_t seed);

// IDX (MNIST) reader. Images: magic 0x00000803, [count, rows, cols] big-endian, u8 pixels
// scaled by 1/255. Labels: magic 0x00000801, [count], u8.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// Writes an IDX image/label pair. Inputs must be [n, rows, cols] with values k/255.
void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// Seeded shuffle, then the first round(test_fraction * n) samples become the test split.
TrainTest split_train_test(const Dataset& data, double test_fraction, std::uint64_t seed);

// First n samples, preserving order.
Dataset take(const Dataset& data, std::size_t n);

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> sd;
    void apply(Dataset& data) const;
};

// Per-feature mean/sd fitted on `train`. Zero-variance features are centered only.
Standardizer fit_standardizer(const Dataset& train);

}  // namespace sculpt
