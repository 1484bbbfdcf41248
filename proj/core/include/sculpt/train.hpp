#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sculpt/checkpoint.hpp"
#include "sculpt/data.hpp"
#include "sculpt/mask.hpp"
#include "sculpt/model.hpp"
#include "sculpt/schedule.hpp"

namespace sculpt {

struct OptimizerConfig {
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t batch_size = 32;
    std::size_t eval_batch_size = 500;

    friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct OptimizerState {
    std::vector<double> velocity;
};

// v ← momentum·v + g + wd·θ;  θ ← θ − lr·v;  then θ and v are multiplied by the mask.
// Non-finite gradients raise DivergenceError tagged with `epoch`.
void sgd_step(ParamVector& params, const ParamVector& grads, const Mask& mask, OptimizerState& opt,
              const OptimizerConfig& cfg, double lr, long epoch = -1);

struct EpochRow {
    std::size_t epoch = 0;
    std::size_t cycle = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_loss = 0.0;
    double test_acc = 0.0;
    double sparsity = 0.0;
    std::size_t sign_flips = 0;

    friend bool operator==(const EpochRow&, const EpochRow&) = default;
};

struct TrainRecord {
    std::vector<EpochRow> rows;

    void append(const TrainRecord& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }
    friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

inline constexpr const char* kMetricsHeader = "epoch,cycle,lr,train_loss,train_acc,test_loss,test_acc,sparsity,sign_flips";

std::string format_metrics_row(const EpochRow& row);
void write_metrics_csv(const std::filesystem::path& path, const TrainRecord& record);
TrainRecord read_metrics_csv(const std::filesystem::path& path);

struct TrainOptions {
    // Global epoch / cycle index of the first epoch of this call; used for CSV rows,
    // checkpoint names and the per-epoch shuffle seed.
    std::size_t epoch_offset = 0;
    std::size_t cycle_offset = 0;
    // Sign-flip reference; defaults to the masked starting parameters.
    std::optional<ParamVector> sign_reference;
    // Capture parameters after this many epochs of this call (0 = starting point).
    std::vector<std::size_t> snapshot_after;
    // Invoked with every end-of-cycle checkpoint.
    std::function<void(const Checkpoint&)> on_checkpoint;
    // Invoked with every metrics row as soon as it is computed.
    std::function<void(const EpochRow&)> on_epoch;
    // Invoked after every epoch with the current parameters, mask and velocity
    // (before any cycle-boundary velocity reset).
    std::function<void(const Checkpoint&)> on_epoch_state;
    // Stop after this many epochs (0 returns the masked starting point untouched).
    std::optional<std::size_t> max_epochs;
    std::string criterion;
};

struct TrainResult {
    ParamVector params;
    TrainRecord record;
    std::vector<Checkpoint> checkpoints;
    std::map<std::size_t, ParamVector> snapshots;
};

// Runs every epoch of `schedule` on m ⊙ θ. Velocity starts at zero and is reset at
// each cycle boundary; a checkpoint is emitted after each cycle. On divergence the
// checkpoints already handed to on_checkpoint remain and DivergenceError propagates.
TrainResult train_cycles(const Model& model, ParamVector params, const Mask& mask, const LrSchedule& schedule,
                         const TrainTest& data, const OptimizerConfig& cfg, std::uint64_t seed,
                         const TrainOptions& options = {});

// Batch-size-weighted mean loss and accuracy over the whole set.
LossAcc evaluate(const Model& model, const ParamVector& params, const Mask& mask, const Dataset& data,
                 std::size_t batch_size = 500);

// Relabels round(fraction · n) randomly chosen samples by permuting their labels so
// that per-class totals are unchanged and, whenever the multiset allows, no chosen
// sample keeps its label. The split tag and inputs are untouched.
Dataset inject_label_noise(const Dataset& data, double fraction, std::uint64_t seed);

}  // namespace sculpt
