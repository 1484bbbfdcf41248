#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sculpt/data.hpp"

namespace sculpt::testing {

// 28x28 single-channel images of seven-segment digits 0-9 with random shift, scale,
// slant, stroke width, segment dropout, a stray stroke and pixel noise. Pixels are
// multiples of 1/255 so the set survives an IDX round trip bit-exactly.
Dataset make_synthetic_digits(std::size_t n, std::uint64_t seed);

struct IdxFiles {
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    std::string provenance;
};

// Real MNIST files when SCULPT_MNIST_DIR names a directory holding the four standard
// IDX files; otherwise synthetic digits written to `dir` as IDX.
IdxFiles digit_idx_files(const std::filesystem::path& dir, std::size_t n_train, std::size_t n_test,
                         std::uint64_t seed);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

}  // namespace sculpt::testing
