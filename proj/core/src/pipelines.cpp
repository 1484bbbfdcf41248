#include "sculpt/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sculpt/checkpoint.hpp"
#include "sculpt/errors.hpp"
#include "sculpt/rng.hpp"

namespace sculpt {

namespace fs = std::filesystem;

const char* pipeline_kind_name(PipelineKind k) {
    switch (k) {
        case PipelineKind::train: return "train";
        case PipelineKind::imp: return "imp";
        case PipelineKind::wr: return "wr";
        case PipelineKind::lrr: return "lrr";
        case PipelineKind::cyclic_pai: return "cyclic_pai";
        case PipelineKind::sculpt: return "sculpt";
        case PipelineKind::sculpt_lrr: return "sculpt_lrr";
        case PipelineKind::coupling: return "coupling";
    }
    return "?";
}

PipelineKind parse_pipeline_kind(const std::string& s) {
    for (auto k : {PipelineKind::train, PipelineKind::imp, PipelineKind::wr, PipelineKind::lrr, PipelineKind::cyclic_pai,
                   PipelineKind::sculpt, PipelineKind::sculpt_lrr, PipelineKind::coupling}) {
        if (s == pipeline_kind_name(k)) return k;
    }
    throw ConfigError("unknown pipeline '" + s +
                      "' (expected train, imp, wr, lrr, cyclic_pai, sculpt, sculpt_lrr or coupling)");
}

const char* init_source_name(InitSourceKind k) {
    switch (k) {
        case InitSourceKind::random: return "random";
        case InitSourceKind::warmup: return "warmup";
        case InitSourceKind::learned: return "learned";
    }
    return "?";
}

InitSourceKind parse_init_source(const std::string& s) {
    if (s == "random") return InitSourceKind::random;
    if (s == "warmup") return InitSourceKind::warmup;
    if (s == "learned") return InitSourceKind::learned;
    throw ConfigError("unknown init source '" + s + "' (expected random, warmup or learned)");
}

double level_target_sparsity(double start_sparsity, double fraction, std::size_t level) {
    return 1.0 - (1.0 - start_sparsity) * std::pow(1.0 - fraction, static_cast<double>(level));
}

std::vector<Mask> sparsity_trajectory(const ParamVector& params, const Mask& start, double fraction,
                                      std::size_t levels) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("sparsity_trajectory: fraction must lie in (0, 1)");
    const double s0 = sparsity(start);
    std::vector<Mask> out{start};
    for (std::size_t n = 1; n <= levels; ++n) {
        out.push_back(
            prune_to_sparsity(out.back(), score_magnitude(params, out.back()), level_target_sparsity(s0, fraction, n)));
    }
    return out;
}

LrSchedule single_cycle(const LrSchedule& schedule) {
    LrSchedule s = schedule;
    s.n_cycles = 1;
    if (s.kind == ScheduleKind::cyclic) s.kind = ScheduleKind::step_warmup_cycle;
    s.validate();
    return s;
}

ParamVector initial_params(const ParamLayout& layout, std::uint64_t seed) {
    return init_kaiming_normal(layout, derive_seed(seed, "init"));
}

namespace {

Mask prune_magnitude(const Mask& mask, const ParamVector& params, double target,
                     const std::optional<AllocationScheme>& allocation) {
    const ScoreVector scores = score_magnitude(params, mask);
    if (!allocation) return prune_to_sparsity(mask, scores, target);
    return prune_to_allocation(mask, scores, allocate_layer_densities(mask.layout(), 1.0 - target, *allocation));
}

Batch score_batch(const Dataset& train, std::size_t samples) {
    std::vector<std::size_t> idx(std::min(samples == 0 ? train.size() : samples, train.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return make_batch(train, idx);
}

class RunWriter {
public:
    explicit RunWriter(fs::path dir) : dir_(std::move(dir)) {
        if (dir_.empty()) return;
        fs::create_directories(dir_);
        std::ofstream out(dir_ / "metrics.csv", std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + (dir_ / "metrics.csv").string());
        out << kMetricsHeader << '\n';
    }

    void row(const EpochRow& r) {
        if (dir_.empty()) return;
        std::ofstream out(dir_ / "metrics.csv", std::ios::binary | std::ios::app);
        out << format_metrics_row(r) << '\n';
    }

    std::string checkpoint(const std::string& name, const Checkpoint& ck) {
        if (!dir_.empty()) save_checkpoint(dir_ / name, ck);
        return name;
    }

    void trajectory(const PipelineResult& result) {
        if (dir_.empty()) return;
        std::ofstream out(dir_ / "trajectory.json", std::ios::binary | std::ios::trunc);
        out << trajectory_json(result) << '\n';
    }

private:
    fs::path dir_;
};

struct Runner {
    Runner(const PipelineConfig& c, const TrainTest& d, PipelineKind kind, const PipelineHooks& h)
        : cfg(c), data(d), hooks(h), model(build_model(c.model)), writer(c.out_dir) {
        if (cfg.optimizer.batch_size == 0) throw ContractError("batch size must be positive");
        result.kind = kind;
        result.trajectory.pipeline = pipeline_kind_name(kind);
        result.trajectory.fraction = c.prune_fraction;
        result.theta0 = initial_params(model.layout, c.seed);
        sign_reference = result.theta0;
    }

    Checkpoint snapshot(const ParamVector& params, const Mask& mask, const std::string& criterion) const {
        Checkpoint ck;
        ck.spec = cfg.model;
        ck.seed = cfg.seed;
        ck.params = params;
        ck.mask = mask;
        ck.epoch = epoch;
        ck.cycle = cycle;
        ck.schedule = cfg.schedule.id();
        ck.criterion = criterion;
        return ck;
    }

    TrainResult train(ParamVector start, const Mask& mask, const LrSchedule& schedule, const std::string& criterion,
                      std::vector<std::size_t> snapshots = {}) {
        TrainOptions o;
        o.epoch_offset = epoch;
        o.cycle_offset = cycle;
        o.sign_reference = sign_reference;
        o.snapshot_after = std::move(snapshots);
        o.criterion = criterion;
        o.on_epoch = [this](const EpochRow& r) { writer.row(r); };
        o.on_epoch_state = hooks.on_epoch_state;
        o.on_checkpoint = [this](const Checkpoint& ck) {
            writer.checkpoint("ckpt_cycle" + std::to_string(ck.cycle) + ".bin", ck);
        };
        TrainResult r = train_cycles(model, std::move(start), mask, schedule, data, cfg.optimizer, cfg.seed, o);
        epoch += schedule.total_epochs();
        cycle += schedule.n_cycles;
        result.record.append(r.record);
        return r;
    }

    void add_level(std::size_t level, const Mask& mask, const ParamVector& start, const TrainResult& tr) {
        LevelRecord lv;
        lv.level = level;
        lv.cycle = cycle - 1;
        lv.sparsity = sparsity(mask);
        lv.mask = mask;
        lv.start_params = start;
        lv.end_params = tr.params;
        if (!tr.record.rows.empty()) {
            lv.final_test_acc = tr.record.rows.back().test_acc;
            for (const auto& r : tr.record.rows) lv.best_test_acc = std::max(lv.best_test_acc, r.test_acc);
        }
        lv.checkpoint = "ckpt_cycle" + std::to_string(lv.cycle) + ".bin";
        result.trajectory.levels.push_back(std::move(lv));
        writer.trajectory(result);
    }

    void add_eval(const std::string& phase, const ParamVector& params, const Mask& mask) {
        PhaseEval e;
        e.phase = phase;
        e.sparsity = sparsity(mask);
        try {
            e.train = evaluate(model, params, mask, data.train, cfg.optimizer.eval_batch_size);
            e.test = evaluate(model, params, mask, data.test, cfg.optimizer.eval_batch_size);
        } catch (const OverflowError& err) {
            throw DivergenceError(std::string("non-finite evaluation: ") + err.what(), static_cast<long>(epoch));
        }
        result.evals.push_back(e);
        writer.trajectory(result);
    }

    PipelineResult finish(ParamVector params, Mask mask) {
        result.final_params = std::move(params);
        result.final_mask = std::move(mask);
        writer.trajectory(result);
        return std::move(result);
    }

    Mask pai_mask(double target) const {
        return build_pai_mask(model, result.theta0, target, cfg.pai_criterion, cfg.allocation, data.train,
                              cfg.score_samples, cfg.seed);
    }

    const PipelineConfig& cfg;
    const TrainTest& data;
    const PipelineHooks& hooks;
    Model model;
    RunWriter writer;
    PipelineResult result;
    ParamVector sign_reference;
    std::size_t epoch = 0;
    std::size_t cycle = 0;
};

enum class Rewind { theta0, theta_k, none };

void check_common(const PipelineConfig& cfg) {
    cfg.model.validate();
    cfg.schedule.validate();
    if (!(cfg.prune_fraction > 0.0 && cfg.prune_fraction < 1.0)) {
        throw ContractError("prune fraction must lie in (0, 1)");
    }
    for (double s : {cfg.sparsity, cfg.start_sparsity, cfg.final_sparsity}) {
        if (!(s >= 0.0 && s < 1.0)) throw ContractError("sparsity values must lie in [0, 1)");
    }
}

// Level 0 trains on the starting mask (with `first` schedule); every later level
// prunes by magnitude to the closed-form target, resets parameters per `rewind` and
// trains one cycle.
PipelineResult run_levels(Runner& r, Rewind rewind, Mask mask, const LrSchedule& first, const std::string& first_criterion) {
    const PipelineConfig& cfg = r.cfg;
    const LrSchedule one = single_cycle(cfg.schedule);
    const double s0 = sparsity(mask);
    r.result.trajectory.start_sparsity = s0;
    const bool capture = cfg.warmup_epoch < first.cycle_epochs;
    if (rewind == Rewind::theta_k && !capture) {
        throw PipelineError("rewind point θ_k at epoch " + std::to_string(cfg.warmup_epoch) +
                            " does not exist: the first cycle has " + std::to_string(first.cycle_epochs) + " epochs");
    }

    ParamVector trained;
    for (std::size_t n = 0; n <= cfg.levels; ++n) {
        ParamVector start;
        if (n == 0) {
            start = apply_mask(r.result.theta0, mask);
        } else {
            mask = prune_magnitude(mask, trained, level_target_sparsity(s0, cfg.prune_fraction, n), cfg.allocation);
            switch (rewind) {
                case Rewind::theta0: start = apply_mask(r.result.theta0, mask); break;
                case Rewind::theta_k: start = apply_mask(*r.result.theta_k, mask); break;
                case Rewind::none: start = apply_mask(trained, mask); break;
            }
        }
        const LrSchedule& sched = n == 0 ? first : one;
        std::vector<std::size_t> snaps;
        if (n == 0 && capture) snaps.push_back(cfg.warmup_epoch);
        TrainResult tr = r.train(start, mask, sched, n == 0 ? first_criterion : "magnitude", snaps);
        if (n == 0 && capture) {
            r.result.theta_k = tr.snapshots.at(cfg.warmup_epoch);
            Checkpoint ck = r.snapshot(*r.result.theta_k, mask, first_criterion);
            ck.epoch = cfg.warmup_epoch;
            ck.cycle = 0;
            r.writer.checkpoint("ckpt_warmup.bin", ck);
        }
        trained = tr.params;
        r.add_level(n, mask, start, tr);
    }
    return r.finish(std::move(trained), std::move(mask));
}

PipelineResult run_iterative(const PipelineConfig& cfg, const TrainTest& data, PipelineKind kind, Rewind rewind,
                             const PipelineHooks& hooks) {
    check_common(cfg);
    Runner r(cfg, data, kind, hooks);
    Mask mask = cfg.start_sparsity > 0.0 ? r.pai_mask(cfg.start_sparsity) : Mask::ones(r.model.layout);
    const std::string crit = cfg.start_sparsity > 0.0 ? criterion_name(cfg.pai_criterion) : "dense";
    r.writer.checkpoint("ckpt_theta0.bin", r.snapshot(r.result.theta0, mask, crit));
    const LrSchedule one = single_cycle(cfg.schedule);
    const LrSchedule first = cfg.prune_after_first_cycle ? one : make_lrr_schedule(2, one);
    return run_levels(r, rewind, std::move(mask), first, crit);
}

}  // namespace

Mask build_pai_mask(const Model& model, const ParamVector& theta, double target, Criterion criterion,
                    const std::optional<AllocationScheme>& allocation, const Dataset& train,
                    std::size_t score_samples, std::uint64_t seed) {
    if (!(target >= 0.0 && target < 1.0)) throw ContractError("mask sparsity must lie in [0, 1)");
    const Mask ones = Mask::ones(model.layout);
    if (target == 0.0) return ones;
    if (criterion == Criterion::random && allocation) {
        return random_mask(model.layout, allocate_layer_densities(model.layout, 1.0 - target, *allocation),
                           derive_seed(seed, "pai_mask"));
    }
    const Batch batch = score_batch(train, score_samples);
    const ScoreVector scores = compute_scores(criterion, model, theta, ones, batch, derive_seed(seed, "pai_scores"));
    if (!allocation) return prune_to_sparsity(ones, scores, target);
    return prune_to_allocation(ones, scores, allocate_layer_densities(model.layout, 1.0 - target, *allocation));
}

PipelineResult run_imp(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks) {
    return run_iterative(cfg, data, PipelineKind::imp, Rewind::theta0, hooks);
}

PipelineResult run_wr(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks) {
    return run_iterative(cfg, data, PipelineKind::wr, Rewind::theta_k, hooks);
}

PipelineResult run_lrr(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks) {
    return run_iterative(cfg, data, PipelineKind::lrr, Rewind::none, hooks);
}

namespace {

PipelineResult run_fixed_mask(const PipelineConfig& cfg, const TrainTest& data, PipelineKind kind,
                              const PipelineHooks& hooks) {
    check_common(cfg);
    Runner r(cfg, data, kind, hooks);
    const Mask mask = r.pai_mask(cfg.sparsity);
    const std::string crit = criterion_name(cfg.pai_criterion);
    r.writer.checkpoint("ckpt_theta0.bin", r.snapshot(r.result.theta0, mask, crit));
    const ParamVector start = apply_mask(r.result.theta0, mask);
    TrainResult tr = r.train(start, mask, cfg.schedule, crit);
    r.add_level(0, mask, start, tr);
    return r.finish(std::move(tr.params), mask);
}

}  // namespace

PipelineResult run_cyclic_pai(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks) {
    return run_fixed_mask(cfg, data, PipelineKind::cyclic_pai, hooks);
}

namespace {

// Phases (a) and (b). Returns the trained parameters and the PaI mask.
std::pair<TrainResult, Mask> sculpt_ab(Runner& r) {
    const PipelineConfig& cfg = r.cfg;
    const Mask mask = r.pai_mask(cfg.start_sparsity);
    const std::string crit = criterion_name(cfg.pai_criterion);
    r.writer.checkpoint("ckpt_theta0.bin", r.snapshot(r.result.theta0, mask, crit));
    r.result.trajectory.start_sparsity = sparsity(mask);
    const ParamVector start = apply_mask(r.result.theta0, mask);
    TrainResult tr = r.train(start, mask, r.cfg.schedule, crit);
    r.add_level(0, mask, start, tr);
    return {std::move(tr), mask};
}

}  // namespace

PipelineResult run_sculpt(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks) {
    check_common(cfg);
    if (cfg.start_sparsity > cfg.final_sparsity) {
        throw ContractError("sculpt: start sparsity " + std::to_string(cfg.start_sparsity) + " exceeds final sparsity " +
                            std::to_string(cfg.final_sparsity));
    }
    Runner r(cfg, data, PipelineKind::sculpt, hooks);
    auto [tb, mask] = sculpt_ab(r);

    // (c) one-shot magnitude prune of the phase-(b) output.
    const Mask pruned = cfg.final_sparsity == cfg.start_sparsity
                            ? mask
                            : prune_magnitude(mask, tb.params, cfg.final_sparsity, cfg.allocation);
    const ParamVector start = apply_mask(tb.params, pruned);
    r.add_eval("post_prune", start, pruned);

    // (d) exactly one retraining cycle.
    TrainResult td = r.train(start, pruned, single_cycle(cfg.schedule), "magnitude");
    r.add_level(1, pruned, start, td);
    return r.finish(std::move(td.params), pruned);
}

PipelineResult run_sculpt_lrr(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks) {
    check_common(cfg);
    Runner r(cfg, data, PipelineKind::sculpt_lrr, hooks);
    auto [tb, mask] = sculpt_ab(r);
    const double s0 = sparsity(mask);
    ParamVector trained = std::move(tb.params);
    for (std::size_t n = 1; n <= cfg.levels; ++n) {
        mask = prune_magnitude(mask, trained, level_target_sparsity(s0, cfg.prune_fraction, n), cfg.allocation);
        const ParamVector start = apply_mask(trained, mask);
        TrainResult tr = r.train(start, mask, single_cycle(cfg.schedule), "magnitude");
        trained = tr.params;
        r.add_level(n, mask, start, tr);
    }
    return r.finish(std::move(trained), std::move(mask));
}

PipelineResult run_coupling(const PipelineConfig& cfg, const TrainTest& data, const PipelineHooks& hooks) {
    check_common(cfg);
    Runner r(cfg, data, PipelineKind::coupling, hooks);

    auto load = [&](const fs::path& path, const char* what) {
        if (path.empty() || !fs::exists(path)) {
            throw PipelineError(std::string(what) + " checkpoint '" + path.string() + "' does not exist");
        }
        Checkpoint ck = load_checkpoint(path);
        if (!(ck.spec == cfg.model)) {
            throw PipelineError(std::string(what) + " checkpoint '" + path.string() + "' was made for a different model");
        }
        return ck;
    };

    Mask mask;
    std::string crit;
    if (cfg.mask_source.kind == MaskSourceKind::pai) {
        mask = r.pai_mask(cfg.sparsity);
        crit = criterion_name(cfg.pai_criterion);
    } else {
        Checkpoint ck = load(cfg.mask_source.checkpoint, "mask");
        mask = std::move(ck.mask);
        crit = ck.criterion;
    }

    ParamVector init;
    switch (cfg.init_source.kind) {
        case InitSourceKind::random: init = r.result.theta0; break;
        case InitSourceKind::warmup: {
            Checkpoint ck = load(cfg.init_source.checkpoint, "warmup");
            if (cfg.init_source.warmup_epoch && ck.epoch != *cfg.init_source.warmup_epoch) {
                throw PipelineError("warmup checkpoint '" + cfg.init_source.checkpoint.string() + "' is from epoch " +
                                    std::to_string(ck.epoch) + ", expected " +
                                    std::to_string(*cfg.init_source.warmup_epoch));
            }
            init = std::move(ck.params);
            break;
        }
        case InitSourceKind::learned: init = load(cfg.init_source.checkpoint, "learned").params; break;
    }
    if (cfg.perturb_fraction > 0.0) {
        init = perturb_signs(init, mask, cfg.perturb_fraction, derive_seed(cfg.seed, "coupling_perturb"),
                             cfg.perturb_mode);
    }
    const ParamVector start = apply_mask(init, mask);
    r.sign_reference = start;
    r.writer.checkpoint("ckpt_theta0.bin", r.snapshot(start, mask, crit));
    r.result.trajectory.start_sparsity = sparsity(mask);
    r.add_eval("initial", start, mask);

    LrSchedule sched = cfg.schedule;
    if (cfg.coupling_cycles) {
        if (*cfg.coupling_cycles == 0) return r.finish(start, mask);
        sched = make_lrr_schedule(*cfg.coupling_cycles, single_cycle(cfg.schedule));
    }
    TrainResult tr = r.train(start, mask, sched, crit);
    r.add_level(0, mask, start, tr);
    return r.finish(std::move(tr.params), mask);
}

PipelineResult run_pipeline(PipelineKind kind, const PipelineConfig& cfg, const TrainTest& data,
                            const PipelineHooks& hooks) {
    switch (kind) {
        case PipelineKind::train: return run_fixed_mask(cfg, data, PipelineKind::train, hooks);
        case PipelineKind::imp: return run_imp(cfg, data, hooks);
        case PipelineKind::wr: return run_wr(cfg, data, hooks);
        case PipelineKind::lrr: return run_lrr(cfg, data, hooks);
        case PipelineKind::cyclic_pai: return run_cyclic_pai(cfg, data, hooks);
        case PipelineKind::sculpt: return run_sculpt(cfg, data, hooks);
        case PipelineKind::sculpt_lrr: return run_sculpt_lrr(cfg, data, hooks);
        case PipelineKind::coupling: return run_coupling(cfg, data, hooks);
    }
    throw ContractError("unknown pipeline");
}

std::string trajectory_json(const PipelineResult& result) {
    using nlohmann::json;
    json levels = json::array();
    for (const auto& lv : result.trajectory.levels) {
        levels.push_back({{"level", lv.level},
                          {"cycle", lv.cycle},
                          {"sparsity", lv.sparsity},
                          {"final_test_acc", lv.final_test_acc},
                          {"best_test_acc", lv.best_test_acc},
                          {"checkpoint", lv.checkpoint}});
    }
    json phases = json::array();
    for (const auto& e : result.evals) {
        phases.push_back({{"phase", e.phase},
                          {"sparsity", e.sparsity},
                          {"train_loss", e.train.loss},
                          {"train_acc", e.train.accuracy},
                          {"test_loss", e.test.loss},
                          {"test_acc", e.test.accuracy}});
    }
    json j{{"pipeline", result.trajectory.pipeline},
           {"prune_fraction", result.trajectory.fraction},
           {"start_sparsity", result.trajectory.start_sparsity},
           {"levels", levels},
           {"phases", phases}};
    return j.dump(2);
}

}  // namespace sculpt
