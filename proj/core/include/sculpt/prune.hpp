#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sculpt/data.hpp"
#include "sculpt/mask.hpp"
#include "sculpt/model.hpp"
#include "sculpt/params.hpp"

namespace sculpt {

enum class Criterion { magnitude, random, snip, synflow };

const char* criterion_name(Criterion c);
Criterion parse_criterion(const std::string& s);

// Importance per parameter, aligned to the full layout. Masked and non-prunable
// positions hold kMaskedScore and are never kept by a ranking.
struct ScoreVector {
    static constexpr double kMaskedScore = -std::numeric_limits<double>::infinity();

    Criterion criterion = Criterion::magnitude;
    std::vector<double> values;
};

ScoreVector score_magnitude(const ParamVector& params, const Mask& mask);
ScoreVector score_random(const ParamLayout& layout, const Mask& mask, std::uint64_t seed);

// |θ_i · g_i| with g the loss gradient on `batch` evaluated at m ⊙ θ.
ScoreVector score_snip(const Model& model, const ParamVector& params, const Mask& mask, const Batch& batch);

// |θ_i · ∂R/∂θ_i| where R sums the logits of the network run with |m ⊙ θ|, biases
// zeroed, on a single all-ones input. If R overflows, every prunable layer is
// divided by its largest magnitude and the score recomputed once; that rescaling
// multiplies all scores by one common factor, so rankings are unaffected.
ScoreVector score_synflow(const Model& model, const ParamVector& params, const Mask& mask);

ScoreVector compute_scores(Criterion c, const Model& model, const ParamVector& params, const Mask& mask,
                           const Batch& batch, std::uint64_t seed);

// Removes floor(fraction · nonzero) unmasked prunable entries with the lowest scores.
// Ties go to the lowest flat index. Requires 0 < fraction < 1.
Mask prune_step(const Mask& mask, const ScoreVector& scores, double fraction);

// One-shot global removal down to round((1 − target) · total) kept entries.
Mask prune_to_sparsity(const Mask& mask, const ScoreVector& scores, double target_sparsity);

// Layerwise variant: each prunable layer keeps exactly allocation.counts[l] entries
// ranked within the layer. Layers may only shrink.
Mask prune_to_allocation(const Mask& mask, const ScoreVector& scores, const DensityAllocation& allocation);

}  // namespace sculpt
