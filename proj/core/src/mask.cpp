#include "sculpt/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sculpt/errors.hpp"
#include "sculpt/rng.hpp"

namespace sculpt {

double round_half_even(double x) { return std::nearbyint(x); }

Mask::Mask(ParamLayout layout, std::vector<std::uint8_t> bits) : layout_(std::move(layout)), bits_(std::move(bits)) {
    recount();
}

void Mask::recount() {
    nonzero_.assign(layout_.segment_count(), 0);
    for (std::size_t s = 0; s < layout_.segment_count(); ++s) {
        const auto& seg = layout_.segment(s);
        std::size_t n = 0;
        for (std::size_t i = 0; i < seg.size; ++i) n += bits_[seg.offset + i] != 0;
        nonzero_[s] = n;
    }
}

Mask Mask::ones(const ParamLayout& layout) { return Mask(layout, std::vector<std::uint8_t>(layout.total(), 1)); }

Mask Mask::zeros(const ParamLayout& layout) {
    std::vector<std::uint8_t> bits(layout.total(), 1);
    for (const auto& seg : layout.segments()) {
        if (seg.prunable) std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(seg.offset), seg.size, 0);
    }
    return Mask(layout, std::move(bits));
}

Mask Mask::from_bits(const ParamLayout& layout, std::vector<std::uint8_t> bits) {
    if (bits.size() != layout.total()) throw ContractError("mask size does not match layout");
    for (auto& b : bits) b = b ? 1 : 0;
    for (const auto& seg : layout.segments()) {
        if (seg.prunable) continue;
        for (std::size_t i = 0; i < seg.size; ++i) {
            if (!bits[seg.offset + i]) throw ContractError("mask clears non-prunable segment '" + seg.name + "'");
        }
    }
    return Mask(layout, std::move(bits));
}

std::size_t Mask::prunable_nonzero() const noexcept {
    std::size_t n = 0;
    for (std::size_t s = 0; s < layout_.segment_count(); ++s) {
        if (layout_.segment(s).prunable) n += nonzero_[s];
    }
    return n;
}

Mask Mask::without(std::span<const std::size_t> indices) const {
    std::vector<std::uint8_t> bits = bits_;
    for (std::size_t i : indices) {
        if (i >= bits.size()) throw ContractError("mask index out of range");
        bits[i] = 0;
    }
    return from_bits(layout_, std::move(bits));
}

double sparsity(const Mask& mask) {
    const std::size_t total = mask.prunable_total();
    if (total == 0) return 0.0;
    return 1.0 - static_cast<double>(mask.prunable_nonzero()) / static_cast<double>(total);
}

void apply_mask_inplace(std::span<double> values, const Mask& mask) {
    if (values.size() != mask.size()) throw ContractError("apply_mask: layout mismatch");
    const auto& bits = mask.bits();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!bits[i]) values[i] = 0.0;
    }
}

ParamVector apply_mask(const ParamVector& params, const Mask& mask) {
    require_same_layout(params.layout, mask.layout(), "apply_mask");
    ParamVector out = params;
    apply_mask_inplace(out.values, mask);
    return out;
}

const char* scheme_name(AllocationScheme s) {
    switch (s) {
        case AllocationScheme::uniform: return "uniform";
        case AllocationScheme::erk: return "erk";
        case AllocationScheme::balanced: return "balanced";
    }
    return "?";
}

AllocationScheme parse_scheme(const std::string& s) {
    if (s == "uniform") return AllocationScheme::uniform;
    if (s == "erk") return AllocationScheme::erk;
    if (s == "balanced") return AllocationScheme::balanced;
    throw ConfigError("unknown allocation scheme '" + s + "' (expected uniform, erk or balanced)");
}

// ---------------------------------------------------------------------------
// Layerwise density allocation

namespace {

// ERK: density ∝ (sum of tensor dims) / (number of entries), scaled to the budget,
// layers that would exceed 1 are made dense and the rest rescaled.
std::vector<double> erk_densities(const std::vector<Segment>& segs, double d) {
    const std::size_t L = segs.size();
    std::vector<double> raw(L);
    double total = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
        const double dims = std::accumulate(segs[l].shape.begin(), segs[l].shape.end(), 0.0,
                                            [](double a, std::size_t b) { return a + static_cast<double>(b); });
        raw[l] = dims / static_cast<double>(segs[l].size);
        total += static_cast<double>(segs[l].size);
    }
    std::vector<char> dense(L, 0);
    std::vector<double> out(L, 1.0);
    for (;;) {
        double budget = d * total;
        double weighted = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            if (dense[l]) budget -= static_cast<double>(segs[l].size);
            else weighted += raw[l] * static_cast<double>(segs[l].size);
        }
        if (weighted <= 0.0) break;
        const double eps = budget / weighted;
        std::size_t worst = L;
        double worst_val = 1.0;
        for (std::size_t l = 0; l < L; ++l) {
            if (!dense[l] && eps * raw[l] > worst_val) {
                worst_val = eps * raw[l];
                worst = l;
            }
        }
        if (worst == L) {
            for (std::size_t l = 0; l < L; ++l) out[l] = dense[l] ? 1.0 : eps * raw[l];
            break;
        }
        dense[worst] = 1;
    }
    return out;
}

// Balanced: equal nonzero count c per layer, layers smaller than c stay dense.
std::vector<double> balanced_densities(const std::vector<Segment>& segs, double d) {
    const std::size_t L = segs.size();
    double total = 0.0;
    for (const auto& s : segs) total += static_cast<double>(s.size);
    std::vector<char> dense(L, 0);
    std::vector<double> out(L, 1.0);
    for (;;) {
        double budget = d * total;
        std::size_t open = 0;
        for (std::size_t l = 0; l < L; ++l) {
            if (dense[l]) budget -= static_cast<double>(segs[l].size);
            else ++open;
        }
        if (open == 0) break;
        const double c = budget / static_cast<double>(open);
        bool changed = false;
        for (std::size_t l = 0; l < L; ++l) {
            if (!dense[l] && static_cast<double>(segs[l].size) <= c) {
                dense[l] = 1;
                changed = true;
            }
        }
        if (!changed) {
            for (std::size_t l = 0; l < L; ++l) out[l] = dense[l] ? 1.0 : c / static_cast<double>(segs[l].size);
            break;
        }
    }
    return out;
}

}  // namespace

DensityAllocation DensityAllocation::from_densities(const ParamLayout& layout, std::vector<double> densities) {
    DensityAllocation a;
    a.segments = layout.prunable_segments();
    if (densities.size() != a.segments.size()) throw ContractError("one density per prunable segment required");
    double kept = 0.0;
    for (std::size_t l = 0; l < densities.size(); ++l) {
        if (!(densities[l] >= 0.0 && densities[l] <= 1.0)) throw AllocationError("layer density outside [0, 1]");
        const auto n = layout.segment(a.segments[l]).size;
        a.counts.push_back(static_cast<std::size_t>(round_half_even(densities[l] * static_cast<double>(n))));
        kept += static_cast<double>(a.counts.back());
    }
    a.densities = std::move(densities);
    const double total = static_cast<double>(layout.prunable_total());
    a.global_density = total > 0 ? kept / total : 1.0;
    return a;
}

DensityAllocation allocate_layer_densities(const ParamLayout& layout, double global_density,
                                           AllocationScheme scheme) {
    if (!(global_density > 0.0 && global_density <= 1.0)) {
        throw AllocationError("global density " + std::to_string(global_density) + " outside (0, 1]");
    }
    DensityAllocation a;
    a.scheme = scheme;
    a.global_density = global_density;
    a.segments = layout.prunable_segments();
    std::vector<Segment> segs;
    for (auto s : a.segments) segs.push_back(layout.segment(s));
    if (segs.empty()) throw AllocationError("layout has no prunable segments");

    switch (scheme) {
        case AllocationScheme::uniform: a.densities.assign(segs.size(), global_density); break;
        case AllocationScheme::erk: a.densities = erk_densities(segs, global_density); break;
        case AllocationScheme::balanced: a.densities = balanced_densities(segs, global_density); break;
    }
    for (double& dl : a.densities) dl = std::min(1.0, dl);

    // Round per layer, then move the residual onto the largest layers so the
    // global keep count is exact.
    const auto total = static_cast<double>(layout.prunable_total());
    const auto target = static_cast<long>(round_half_even(global_density * total));
    long sum = 0;
    for (std::size_t l = 0; l < segs.size(); ++l) {
        a.counts.push_back(static_cast<std::size_t>(round_half_even(a.densities[l] * static_cast<double>(segs[l].size))));
        sum += static_cast<long>(a.counts.back());
    }
    std::vector<std::size_t> order(segs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return segs[x].size > segs[y].size; });
    long diff = target - sum;
    for (std::size_t l : order) {
        if (diff == 0) break;
        const long cap = static_cast<long>(segs[l].size);
        const long cur = static_cast<long>(a.counts[l]);
        const long next = std::clamp(cur + diff, 0L, cap);
        diff -= next - cur;
        a.counts[l] = static_cast<std::size_t>(next);
    }
    if (diff != 0) throw AllocationError("global budget infeasible for the layer capacities");
    return a;
}

Mask random_mask(const ParamLayout& layout, const DensityAllocation& allocation, std::uint64_t seed) {
    if (allocation.segments != layout.prunable_segments() || allocation.counts.size() != allocation.segments.size()) {
        throw ContractError("random_mask: allocation does not match layout");
    }
    std::vector<std::uint8_t> bits(layout.total(), 1);
    for (std::size_t l = 0; l < allocation.segments.size(); ++l) {
        const auto& seg = layout.segment(allocation.segments[l]);
        const std::size_t keep = allocation.counts[l];
        if (keep > seg.size) throw ContractError("random_mask: count exceeds layer size");
        Rng rng(derive_seed(seed, "random_mask", l));
        std::vector<std::size_t> idx(seg.size);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        // Partial Fisher-Yates: the first `keep` slots end up a uniform sample.
        for (std::size_t i = 0; i < keep; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, seg.size - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(seg.offset), seg.size, 0);
        for (std::size_t i = 0; i < keep; ++i) bits[seg.offset + idx[i]] = 1;
    }
    return Mask::from_bits(layout, std::move(bits));
}

}  // namespace sculpt
