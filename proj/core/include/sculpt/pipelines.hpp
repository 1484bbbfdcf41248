#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sculpt/analysis.hpp"
#include "sculpt/data.hpp"
#include "sculpt/mask.hpp"
#include "sculpt/model.hpp"
#include "sculpt/prune.hpp"
#include "sculpt/schedule.hpp"
#include "sculpt/train.hpp"

namespace sculpt {

enum class PipelineKind { train, imp, wr, lrr, cyclic_pai, sculpt, sculpt_lrr, coupling };

const char* pipeline_kind_name(PipelineKind k);
PipelineKind parse_pipeline_kind(const std::string& s);

enum class MaskSourceKind { pai, checkpoint };
enum class InitSourceKind { random, warmup, learned };

const char* init_source_name(InitSourceKind k);
InitSourceKind parse_init_source(const std::string& s);

struct MaskSource {
    MaskSourceKind kind = MaskSourceKind::pai;
    std::filesystem::path checkpoint;  // kind == checkpoint

    friend bool operator==(const MaskSource&, const MaskSource&) = default;
};

struct InitSource {
    InitSourceKind kind = InitSourceKind::random;
    std::filesystem::path checkpoint;    // warmup / learned
    std::optional<std::size_t> warmup_epoch;  // if set, the warmup checkpoint must be from this epoch

    friend bool operator==(const InitSource&, const InitSource&) = default;
};

struct PipelineConfig {
    ModelSpec model;
    // Full schedule for cyclic_pai / train / sculpt phase (b) / coupling. The iterative
    // pipelines and sculpt phase (d) use a single cycle of it.
    LrSchedule schedule = default_cycle();
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;

    // Iterative pruning.
    std::size_t levels = 3;
    double prune_fraction = 0.2;
    // false: one extra dense cycle is trained before the first prune.
    bool prune_after_first_cycle = true;
    std::size_t warmup_epoch = 2;

    // Masks at initialization and one-shot pruning.
    Criterion pai_criterion = Criterion::random;
    std::optional<AllocationScheme> allocation;  // nullopt: global ranking
    double sparsity = 0.9;                       // cyclic_pai / train / coupling (pai mask)
    double start_sparsity = 0.0;                 // sculpt (a); starting sparsity of iterative runs
    double final_sparsity = 0.9;                 // sculpt (c)
    std::size_t score_samples = 256;             // training samples used by SNIP

    // Coupling.
    MaskSource mask_source;
    InitSource init_source;
    double perturb_fraction = 0.0;
    PerturbMode perturb_mode = PerturbMode::flip_signs;
    // Cycles of `schedule` to train after coupling; 0 only evaluates the starting point.
    // Unset: the schedule as given.
    std::optional<std::size_t> coupling_cycles;

    // Empty: nothing written to disk.
    std::filesystem::path out_dir;

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

struct LevelRecord {
    std::size_t level = 0;
    std::size_t cycle = 0;  // global index of the training cycle for this level
    double sparsity = 0.0;
    Mask mask;
    ParamVector start_params;  // masked parameters the level started training from
    ParamVector end_params;
    double final_test_acc = 0.0;
    double best_test_acc = 0.0;
    std::string checkpoint;
};

struct PruneTrajectory {
    std::string pipeline;
    double fraction = 0.2;
    double start_sparsity = 0.0;
    std::vector<LevelRecord> levels;
};

// Evaluation outside the epoch loop (e.g. after SCULPT's one-shot prune).
struct PhaseEval {
    std::string phase;
    double sparsity = 0.0;
    LossAcc train;
    LossAcc test;
};

struct PipelineResult {
    PipelineKind kind = PipelineKind::train;
    PruneTrajectory trajectory;
    TrainRecord record;
    ParamVector theta0;
    std::optional<ParamVector> theta_k;
    ParamVector final_params;
    Mask final_mask;
    std::vector<PhaseEval> evals;
};

// Observation points for tests and tooling; not part of the configuration.
struct PipelineHooks {
    std::function<void(const Checkpoint&)> on_epoch_state;
};

// 1 − (1 − s0)·(1 − fraction)^n.
double level_target_sparsity(double start_sparsity, double fraction, std::size_t level);

// Mask sequence of an iterative magnitude trajectory without training: level n is
// prune_to_sparsity(level n−1, |θ|, level_target_sparsity(s0, fraction, n)).
std::vector<Mask> sparsity_trajectory(const ParamVector& params, const Mask& start, double fraction,
                                      std::size_t levels);

// Single cycle of `schedule` (cyclic collapses to step_warmup_cycle).
LrSchedule single_cycle(const LrSchedule& schedule);

// Mask at initialization at `target` sparsity using `criterion`; SNIP scores use the
// first `score_samples` training samples.
Mask build_pai_mask(const Model& model, const ParamVector& theta, double target, Criterion criterion,
                    const std::optional<AllocationScheme>& allocation, const Dataset& train,
                    std::size_t score_samples, std::uint64_t seed);

// θ0 shared by every pipeline for a given seed.
ParamVector initial_params(const ParamLayout& layout, std::uint64_t seed);

PipelineResult run_imp(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks = {});
PipelineResult run_wr(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks = {});
PipelineResult run_lrr(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks = {});
PipelineResult run_cyclic_pai(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks = {});
PipelineResult run_sculpt(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks = {});
// SCULPT phases (a)–(b), then LRR levels starting from the phase-(b) parameters.
PipelineResult run_sculpt_lrr(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks = {});
PipelineResult run_coupling(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks = {});

PipelineResult run_pipeline(PipelineKind kind, const PipelineConfig& cfg, const TrainTest& data,
                            const PipelineHooks& hooks = {});

std::string trajectory_json(const PipelineResult& result);

}  // namespace sculpt
