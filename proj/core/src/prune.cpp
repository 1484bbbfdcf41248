#include "sculpt/prune.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "sculpt/errors.hpp"
#include "sculpt/rng.hpp"

namespace sculpt {

const char* criterion_name(Criterion c) {
    switch (c) {
        case Criterion::magnitude: return "magnitude";
        case Criterion::random: return "random";
        case Criterion::snip: return "snip";
        case Criterion::synflow: return "synflow";
    }
    return "?";
}

Criterion parse_criterion(const std::string& s) {
    if (s == "magnitude") return Criterion::magnitude;
    if (s == "random") return Criterion::random;
    if (s == "snip") return Criterion::snip;
    if (s == "synflow") return Criterion::synflow;
    throw ConfigError("unknown pruning criterion '" + s + "' (expected magnitude, random, snip or synflow)");
}

namespace {

bool scorable(const Mask& mask, const Segment& seg, std::size_t i) { return seg.prunable && mask.kept(seg.offset + i); }

template <class F>
ScoreVector fill_scores(Criterion c, const ParamLayout& layout, const Mask& mask, F&& f) {
    require_same_layout(layout, mask.layout(), "score");
    ScoreVector s{c, std::vector<double>(layout.total(), ScoreVector::kMaskedScore)};
    for (const auto& seg : layout.segments()) {
        for (std::size_t i = 0; i < seg.size; ++i) {
            if (scorable(mask, seg, i)) s.values[seg.offset + i] = f(seg.offset + i);
        }
    }
    return s;
}

void require_finite(const ParamVector& g, const char* what) {
    for (double v : g.values) {
        if (!std::isfinite(v)) throw OverflowError(std::string(what) + ": non-finite gradient");
    }
}

// Unmasked prunable flat indices ordered by (score, index) ascending.
std::vector<std::size_t> ranked_candidates(const Mask& mask, const ScoreVector& scores,
                                           const std::vector<std::size_t>& segments) {
    std::vector<std::size_t> idx;
    for (auto s : segments) {
        const auto& seg = mask.layout().segment(s);
        for (std::size_t i = 0; i < seg.size; ++i) {
            if (mask.kept(seg.offset + i)) idx.push_back(seg.offset + i);
        }
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double sa = scores.values[a], sb = scores.values[b];
        if (sa != sb) return sa < sb;
        return a < b;
    });
    return idx;
}

void check_scores(const Mask& mask, const ScoreVector& scores) {
    if (scores.values.size() != mask.size()) throw ContractError("score vector does not match mask layout");
}

}  // namespace

ScoreVector score_magnitude(const ParamVector& params, const Mask& mask) {
    return fill_scores(Criterion::magnitude, params.layout, mask, [&](std::size_t i) { return std::abs(params.values[i]); });
}

ScoreVector score_random(const ParamLayout& layout, const Mask& mask, std::uint64_t seed) {
    Rng rng = make_rng(seed, "score_random");
    // Draw for every position so the stream does not depend on the mask.
    std::vector<double> u(layout.total());
    for (double& v : u) v = uniform_open01(rng);
    return fill_scores(Criterion::random, layout, mask, [&](std::size_t i) { return u[i]; });
}

ScoreVector score_snip(const Model& model, const ParamVector& params, const Mask& mask, const Batch& batch) {
    if (batch.size() == 0) throw ContractError("score_snip: empty batch");
    const ParamVector masked = apply_mask(params, mask);
    const auto vg = loss_and_grad(model, masked, batch);
    require_finite(vg.grad, "score_snip");
    return fill_scores(Criterion::snip, params.layout, mask,
                       [&](std::size_t i) { return std::abs(params.values[i] * vg.grad.values[i]); });
}

ScoreVector score_synflow(const Model& model, const ParamVector& params, const Mask& mask) {
    require_same_layout(params.layout, mask.layout(), "score_synflow");
    Graph g = model.graph;
    const NodeId r = g.sum(model.logits);
    const Bindings in{{"x", Tensor({1, model.spec.input_features()}, 1.0)}};

    ParamVector lin = apply_mask(params, mask);
    for (std::size_t s = 0; s < lin.layout.segment_count(); ++s) {
        auto v = lin.segment(s);
        if (!lin.layout.segment(s).prunable) {
            std::fill(v.begin(), v.end(), 0.0);
        } else {
            for (double& x : v) x = std::abs(x);
        }
    }

    auto attempt = [&](const ParamVector& p) {
        const std::array<NodeId, 1> targets{r};
        const Tape tape = forward(g, in, p, targets);
        ParamVector grad = backward(g, tape, r, p.layout);
        require_finite(grad, "score_synflow");
        return grad;
    };

    ParamVector grad;
    try {
        grad = attempt(lin);
    } catch (const OverflowError&) {
        for (std::size_t s = 0; s < lin.layout.segment_count(); ++s) {
            if (!lin.layout.segment(s).prunable) continue;
            auto v = lin.segment(s);
            const double mx = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
            if (mx > 0.0) {
                for (double& x : v) x /= mx;
            }
        }
        grad = attempt(lin);
    }
    return fill_scores(Criterion::synflow, params.layout, mask,
                       [&](std::size_t i) { return std::abs(lin.values[i] * grad.values[i]); });
}

ScoreVector compute_scores(Criterion c, const Model& model, const ParamVector& params, const Mask& mask,
                           const Batch& batch, std::uint64_t seed) {
    switch (c) {
        case Criterion::magnitude: return score_magnitude(params, mask);
        case Criterion::random: return score_random(params.layout, mask, seed);
        case Criterion::snip: return score_snip(model, params, mask, batch);
        case Criterion::synflow: return score_synflow(model, params, mask);
    }
    throw ContractError("unknown criterion");
}

Mask prune_step(const Mask& mask, const ScoreVector& scores, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("prune_step: fraction must lie in (0, 1)");
    check_scores(mask, scores);
    const std::size_t nonzero = mask.prunable_nonzero();
    const auto remove = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(nonzero)));
    if (nonzero == 0 || remove >= nonzero) throw PruneError("prune_step would leave no prunable parameters");
    const auto ranked = ranked_candidates(mask, scores, mask.layout().prunable_segments());
    return mask.without(std::span(ranked).first(remove));
}

Mask prune_to_sparsity(const Mask& mask, const ScoreVector& scores, double target_sparsity) {
    if (!(target_sparsity >= 0.0 && target_sparsity < 1.0)) {
        throw ContractError("prune_to_sparsity: target must lie in [0, 1)");
    }
    check_scores(mask, scores);
    const std::size_t total = mask.prunable_total();
    const double one = 1.0 / static_cast<double>(std::max<std::size_t>(total, 1));
    if (target_sparsity < sparsity(mask) - one) {
        throw ContractError("prune_to_sparsity: target " + std::to_string(target_sparsity) +
                            " is below current sparsity " + std::to_string(sparsity(mask)));
    }
    const auto zeros = static_cast<std::size_t>(round_half_even(target_sparsity * static_cast<double>(total)));
    const std::size_t keep = total - std::min(zeros, total);
    const std::size_t nonzero = mask.prunable_nonzero();
    if (keep >= nonzero) return mask;
    const auto ranked = ranked_candidates(mask, scores, mask.layout().prunable_segments());
    return mask.without(std::span(ranked).first(nonzero - keep));
}

Mask prune_to_allocation(const Mask& mask, const ScoreVector& scores, const DensityAllocation& allocation) {
    check_scores(mask, scores);
    if (allocation.segments != mask.layout().prunable_segments()) {
        throw ContractError("prune_to_allocation: allocation does not match layout");
    }
    std::vector<std::size_t> drop;
    for (std::size_t l = 0; l < allocation.segments.size(); ++l) {
        const std::size_t seg = allocation.segments[l];
        const std::size_t have = mask.segment_nonzero(seg);
        const std::size_t keep = allocation.counts[l];
        if (keep > have) throw ContractError("prune_to_allocation: layer '" + mask.layout().segment(seg).name +
                                             "' would need to regrow");
        const auto ranked = ranked_candidates(mask, scores, {seg});
        drop.insert(drop.end(), ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(have - keep));
    }
    return mask.without(drop);
}

}  // namespace sculpt
