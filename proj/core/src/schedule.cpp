#include "sculpt/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sculpt/errors.hpp"

namespace sculpt {

const char* schedule_kind_name(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::step_warmup_cycle: return "step_warmup_cycle";
        case ScheduleKind::cyclic: return "cyclic";
        case ScheduleKind::one_cycle: return "one_cycle";
        case ScheduleKind::cosine_restarts: return "cosine_restarts";
    }
    return "?";
}

ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "step_warmup_cycle") return ScheduleKind::step_warmup_cycle;
    if (s == "cyclic") return ScheduleKind::cyclic;
    if (s == "one_cycle") return ScheduleKind::one_cycle;
    if (s == "cosine_restarts") return ScheduleKind::cosine_restarts;
    throw ConfigError("unknown schedule kind '" + s +
                      "' (expected step_warmup_cycle, cyclic, one_cycle or cosine_restarts)");
}

void LrSchedule::validate() const {
    if (cycle_epochs == 0 || n_cycles == 0) throw ContractError("schedule lengths must be positive");
    if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw ContractError("peak_lr must be positive");
    if (!(drop_factor >= 1.0)) throw ContractError("drop_factor must be >= 1");
    if (kind == ScheduleKind::step_warmup_cycle && n_cycles != 1) {
        throw ContractError("step_warmup_cycle is a single cycle; use cyclic for repeats");
    }
    if (kind == ScheduleKind::step_warmup_cycle || kind == ScheduleKind::cyclic) {
        if (warmup_epochs >= cycle_epochs) throw ContractError("warmup must end inside the cycle");
        for (std::size_t i = 0; i < drop_epochs.size(); ++i) {
            if (drop_epochs[i] >= cycle_epochs) throw ContractError("drop epochs must lie inside the cycle");
            if (i > 0 && drop_epochs[i] <= drop_epochs[i - 1]) throw ContractError("drop epochs must increase");
        }
    }
    if (kind == ScheduleKind::cosine_restarts && !(floor_ratio > 0.0 && floor_ratio < 1.0)) {
        throw ContractError("cosine floor ratio must lie in (0, 1)");
    }
    if (kind == ScheduleKind::one_cycle && !(one_cycle_up > 0.0 && one_cycle_up < 1.0)) {
        throw ContractError("one_cycle ramp fraction must lie in (0, 1)");
    }
}

std::string LrSchedule::id() const {
    std::ostringstream os;
    os.precision(17);
    os << schedule_kind_name(kind) << ':' << cycle_epochs << 'x' << n_cycles << ":peak=" << peak_lr;
    switch (kind) {
        case ScheduleKind::step_warmup_cycle:
        case ScheduleKind::cyclic:
            os << ":warmup=" << warmup_epochs << ":drops=";
            for (std::size_t i = 0; i < drop_epochs.size(); ++i) os << (i ? "," : "") << drop_epochs[i];
            os << ":factor=" << drop_factor;
            break;
        case ScheduleKind::cosine_restarts: os << ":floor=" << floor_ratio; break;
        case ScheduleKind::one_cycle: os << ":up=" << one_cycle_up; break;
    }
    return os.str();
}

namespace {

double step_warmup(const LrSchedule& s, std::size_t e) {
    if (e < s.warmup_epochs) {
        return s.peak_lr * static_cast<double>(e + 1) / static_cast<double>(s.warmup_epochs);
    }
    const auto passed = std::count_if(s.drop_epochs.begin(), s.drop_epochs.end(), [&](std::size_t d) { return d <= e; });
    return s.peak_lr / std::pow(s.drop_factor, static_cast<double>(passed));
}

}  // namespace

double lr_at(const LrSchedule& s, std::size_t epoch) {
    s.validate();
    const std::size_t total = s.total_epochs();
    if (epoch >= total) {
        throw ContractError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total) + ")");
    }
    switch (s.kind) {
        case ScheduleKind::step_warmup_cycle:
        case ScheduleKind::cyclic: return step_warmup(s, epoch % s.cycle_epochs);
        case ScheduleKind::cosine_restarts: {
            const double t = static_cast<double>(epoch % s.cycle_epochs) / static_cast<double>(s.cycle_epochs);
            const double lo = s.peak_lr * s.floor_ratio;
            return lo + (s.peak_lr - lo) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
        }
        case ScheduleKind::one_cycle: {
            const auto up = std::clamp<std::size_t>(
                static_cast<std::size_t>(std::lround(s.one_cycle_up * static_cast<double>(total))), 1, total);
            if (epoch < up) return s.peak_lr * static_cast<double>(epoch + 1) / static_cast<double>(up);
            return s.peak_lr * static_cast<double>(total - epoch) / static_cast<double>(total - up + 1);
        }
    }
    throw ContractError("unknown schedule kind");
}

LrSchedule default_cycle() {
    LrSchedule s;
    s.kind = ScheduleKind::step_warmup_cycle;
    s.cycle_epochs = 20;
    s.n_cycles = 1;
    s.peak_lr = 0.1;
    s.warmup_epochs = 2;
    s.drop_epochs = {10, 17};
    s.drop_factor = 10.0;
    return s;
}

LrSchedule make_lrr_schedule(std::size_t n_levels, const LrSchedule& cycle) {
    if (n_levels == 0) throw ContractError("make_lrr_schedule: need at least one level");
    LrSchedule s = cycle;
    if (n_levels > 1 && s.kind == ScheduleKind::step_warmup_cycle) s.kind = ScheduleKind::cyclic;
    s.n_cycles = n_levels;
    s.validate();
    return s;
}

}  // namespace sculpt
