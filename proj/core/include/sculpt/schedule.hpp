#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sculpt {

enum class ScheduleKind { step_warmup_cycle, cyclic, one_cycle, cosine_restarts };

const char* schedule_kind_name(ScheduleKind k);
ScheduleKind parse_schedule_kind(const std::string& s);

// Epoch-indexed learning rate. The base cycle is `cycle_epochs` long and is repeated
// `n_cycles` times (one_cycle instead stretches a single ramp over all epochs).
struct LrSchedule {
    ScheduleKind kind = ScheduleKind::cyclic;
    std::size_t cycle_epochs = 20;
    std::size_t n_cycles = 1;
    double peak_lr = 0.1;
    std::size_t warmup_epochs = 2;
    std::vector<std::size_t> drop_epochs{10, 17};
    double drop_factor = 10.0;
    double floor_ratio = 1e-3;   // cosine floor = peak_lr · floor_ratio
    double one_cycle_up = 0.3;   // fraction of all epochs spent ramping up

    std::size_t total_epochs() const { return cycle_epochs * n_cycles; }
    std::size_t cycle_of(std::size_t epoch) const { return epoch / cycle_epochs; }

    // Throws ContractError if the invariants (positive lengths, increasing drops
    // inside the cycle, positive rates) do not hold.
    void validate() const;

    // Compact identifier, e.g. "cyclic:20x5:peak=0.1:warmup=2:drops=10,17:factor=10".
    std::string id() const;

    friend bool operator==(const LrSchedule&, const LrSchedule&) = default;
};

// Throws ContractError unless 0 <= epoch < total_epochs().
double lr_at(const LrSchedule& schedule, std::size_t epoch);

// Desk-scale base cycle: 20 epochs, linear warmup over 2, drops by 10 at 10 and 17.
LrSchedule default_cycle();

// One base cycle per pruning level, restarting the schedule each level.
LrSchedule make_lrr_schedule(std::size_t n_levels, const LrSchedule& cycle);

}  // namespace sculpt
