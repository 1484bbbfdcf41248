#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sculpt/params.hpp"

namespace sculpt {

// Binary keep-mask aligned to a ParamLayout. Bits over non-prunable segments
// are always 1; per-segment nonzero counts are cached.
class Mask {
public:
    Mask() = default;

    static Mask ones(const ParamLayout& layout);
    // All prunable bits cleared.
    static Mask zeros(const ParamLayout& layout);
    // Throws ContractError on a size mismatch or a cleared non-prunable bit.
    static Mask from_bits(const ParamLayout& layout, std::vector<std::uint8_t> bits);

    const ParamLayout& layout() const noexcept { return layout_; }
    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
    bool kept(std::size_t i) const { return bits_[i] != 0; }
    std::size_t size() const noexcept { return bits_.size(); }

    std::size_t segment_nonzero(std::size_t seg) const { return nonzero_.at(seg); }
    std::size_t prunable_nonzero() const noexcept;
    std::size_t prunable_total() const noexcept { return layout_.prunable_total(); }

    // New mask with the given flat indices cleared. Indices must be prunable.
    Mask without(std::span<const std::size_t> indices) const;

    friend bool operator==(const Mask& a, const Mask& b) { return a.layout_ == b.layout_ && a.bits_ == b.bits_; }

private:
    Mask(ParamLayout layout, std::vector<std::uint8_t> bits);
    void recount();

    ParamLayout layout_;
    std::vector<std::uint8_t> bits_;
    std::vector<std::size_t> nonzero_;
};

// 1 − nonzero/total over prunable segments.
double sparsity(const Mask& mask);

// m ⊙ θ. Masked entries become exactly 0.0.
ParamVector apply_mask(const ParamVector& params, const Mask& mask);
void apply_mask_inplace(std::span<double> values, const Mask& mask);

enum class AllocationScheme { uniform, erk, balanced };

const char* scheme_name(AllocationScheme s);
AllocationScheme parse_scheme(const std::string& s);

// Per-layer densities for the prunable segments (in layout order) and the integer
// keep counts realised from them.
struct DensityAllocation {
    AllocationScheme scheme = AllocationScheme::uniform;
    double global_density = 1.0;
    std::vector<std::size_t> segments;
    std::vector<double> densities;
    std::vector<std::size_t> counts;

    // Explicit per-layer densities in [0, 1]; counts are rounded per layer only.
    static DensityAllocation from_densities(const ParamLayout& layout, std::vector<double> densities);
};

// Requires 0 < global_density <= 1. Counts sum to round(d · total_prunable) exactly.
DensityAllocation allocate_layer_densities(const ParamLayout& layout, double global_density,
                                           AllocationScheme scheme);

// Within each layer keeps exactly counts[l] positions drawn uniformly without replacement.
Mask random_mask(const ParamLayout& layout, const DensityAllocation& allocation, std::uint64_t seed);

double round_half_even(double x);

}  // namespace sculpt
