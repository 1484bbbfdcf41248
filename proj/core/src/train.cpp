#include "sculpt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "sculpt/analysis.hpp"
#include "sculpt/errors.hpp"
#include "sculpt/rng.hpp"

namespace sculpt {

void sgd_step(ParamVector& params, const ParamVector& grads, const Mask& mask, OptimizerState& opt,
              const OptimizerConfig& cfg, double lr, long epoch) {
    const std::size_t n = params.size();
    if (grads.size() != n || mask.size() != n) throw ContractError("sgd_step: layout mismatch");
    if (opt.velocity.empty()) opt.velocity.assign(n, 0.0);
    if (opt.velocity.size() != n) throw ContractError("sgd_step: velocity does not match parameters");
    for (double g : grads.values) {
        if (!std::isfinite(g)) throw DivergenceError("non-finite gradient", epoch);
    }
    const auto& bits = mask.bits();
    for (std::size_t i = 0; i < n; ++i) {
        if (!bits[i]) {
            params.values[i] = 0.0;
            opt.velocity[i] = 0.0;
            continue;
        }
        double& v = opt.velocity[i];
        v = cfg.momentum * v + grads.values[i] + cfg.weight_decay * params.values[i];
        params.values[i] -= lr * v;
    }
}

// ---------------------------------------------------------------------------
// Metrics CSV

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string format_metrics_row(const EpochRow& r) {
    return std::to_string(r.epoch) + ',' + std::to_string(r.cycle) + ',' + fmt(r.lr) + ',' + fmt(r.train_loss) + ',' +
           fmt(r.train_acc) + ',' + fmt(r.test_loss) + ',' + fmt(r.test_acc) + ',' + fmt(r.sparsity) + ',' +
           std::to_string(r.sign_flips);
}

void write_metrics_csv(const std::filesystem::path& path, const TrainRecord& record) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << kMetricsHeader << '\n';
    for (const auto& r : record.rows) out << format_metrics_row(r) << '\n';
}

TrainRecord read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError(path.string() + ": unexpected header");
    TrainRecord rec;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 9) throw FormatError(path.string() + ": malformed row '" + line + "'");
        try {
            EpochRow r;
            r.epoch = std::stoull(f[0]);
            r.cycle = std::stoull(f[1]);
            r.lr = std::stod(f[2]);
            r.train_loss = std::stod(f[3]);
            r.train_acc = std::stod(f[4]);
            r.test_loss = std::stod(f[5]);
            r.test_acc = std::stod(f[6]);
            r.sparsity = std::stod(f[7]);
            r.sign_flips = std::stoull(f[8]);
            rec.rows.push_back(r);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": malformed row '" + line + "'");
        }
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Evaluation and training

LossAcc evaluate(const Model& model, const ParamVector& params, const Mask& mask, const Dataset& data,
                 std::size_t batch_size) {
    if (data.size() == 0) throw ContractError("evaluate: empty dataset");
    if (batch_size == 0) throw ContractError("evaluate: batch size must be positive");
    const ParamVector masked = apply_mask(params, mask);
    const std::size_t n = data.size();
    if (n <= batch_size) return forward_loss(model, masked, full_batch(data));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> losses, correct;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t len = std::min(batch_size, n - start);
        const auto r = forward_loss(model, masked, make_batch(data, std::span(idx).subspan(start, len)));
        losses.push_back(r.loss * static_cast<double>(len));
        correct.push_back(r.accuracy * static_cast<double>(len));
    }
    return {pairwise_sum(losses) / static_cast<double>(n), std::round(pairwise_sum(correct)) / static_cast<double>(n)};
}

TrainResult train_cycles(const Model& model, ParamVector params, const Mask& mask, const LrSchedule& schedule,
                         const TrainTest& data, const OptimizerConfig& cfg, std::uint64_t seed,
                         const TrainOptions& options) {
    schedule.validate();
    require_same_layout(params.layout, mask.layout(), "train_cycles");
    if (cfg.batch_size == 0) throw ContractError("train_cycles: batch size must be positive");
    data.train.validate();
    data.test.validate();

    apply_mask_inplace(params.values, mask);
    const ParamVector reference = options.sign_reference ? *options.sign_reference : params;
    const double sp = sparsity(mask);

    TrainResult result;
    auto snap = [&](std::size_t done) {
        if (std::find(options.snapshot_after.begin(), options.snapshot_after.end(), done) != options.snapshot_after.end()) {
            result.snapshots.emplace(done, params);
        }
    };
    snap(0);

    const std::size_t total = std::min(schedule.total_epochs(), options.max_epochs.value_or(schedule.total_epochs()));
    const std::size_t n = data.train.size();
    std::vector<std::size_t> order(n);
    OptimizerState opt;
    opt.velocity.assign(params.size(), 0.0);

    for (std::size_t e = 0; e < total; ++e) {
        const std::size_t global_epoch = options.epoch_offset + e;
        const double lr = lr_at(schedule, e);

        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(seed, "shuffle", global_epoch));
        std::shuffle(order.begin(), order.end(), rng);

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n - start);
            const Batch batch = make_batch(data.train, std::span(order).subspan(start, len));
            ValueAndGrad vg;
            try {
                vg = loss_and_grad(model, params, batch);
            } catch (const OverflowError& err) {
                throw DivergenceError(std::string("non-finite loss: ") + err.what(), static_cast<long>(global_epoch));
            }
            sgd_step(params, vg.grad, mask, opt, cfg, lr, static_cast<long>(global_epoch));
        }

        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!mask.kept(i) && (params.values[i] != 0.0 || opt.velocity[i] != 0.0)) {
                throw ContractError("freeze invariant violated at coordinate " + std::to_string(i));
            }
        }

        EpochRow row;
        row.epoch = global_epoch;
        row.cycle = options.cycle_offset + schedule.cycle_of(e);
        row.lr = lr;
        LossAcc tr, te;
        try {
            tr = evaluate(model, params, mask, data.train, cfg.eval_batch_size);
            te = evaluate(model, params, mask, data.test, cfg.eval_batch_size);
        } catch (const OverflowError& err) {
            throw DivergenceError(std::string("non-finite evaluation: ") + err.what(), static_cast<long>(global_epoch));
        }
        row.train_loss = tr.loss;
        row.train_acc = tr.accuracy;
        row.test_loss = te.loss;
        row.test_acc = te.accuracy;
        row.sparsity = sp;
        row.sign_flips = count_sign_flips(reference, params, mask);
        result.record.rows.push_back(row);
        if (options.on_epoch) options.on_epoch(row);

        snap(e + 1);

        auto make_checkpoint = [&] {
            Checkpoint ck;
            ck.spec = model.spec;
            ck.seed = seed;
            ck.params = params;
            ck.mask = mask;
            ck.velocity = opt.velocity;
            ck.epoch = global_epoch + 1;
            ck.cycle = row.cycle;
            ck.schedule = schedule.id();
            ck.criterion = options.criterion;
            return ck;
        };
        if (options.on_epoch_state) options.on_epoch_state(make_checkpoint());

        if ((e + 1) % schedule.cycle_epochs == 0) {
            Checkpoint ck = make_checkpoint();
            if (options.on_checkpoint) options.on_checkpoint(ck);
            result.checkpoints.push_back(std::move(ck));
            std::fill(opt.velocity.begin(), opt.velocity.end(), 0.0);
        }
    }
    result.params = std::move(params);
    return result;
}

// ---------------------------------------------------------------------------
// Label noise

Dataset inject_label_noise(const Dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ContractError("inject_label_noise: fraction outside [0, 1]");
    Dataset out = data;
    const std::size_t n = data.size();
    const auto k = static_cast<std::size_t>(round_half_even(fraction * static_cast<double>(n)));
    if (k < 2) return out;

    Rng rng = make_rng(seed, "label_noise");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::size_t> chosen(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));

    // Group the chosen samples by label (random order inside a group), then hand each
    // sample the label sitting `shift` places further along. With shift = largest group
    // size <= k/2 no sample lands back inside its own group.
    std::stable_sort(chosen.begin(), chosen.end(),
                     [&](std::size_t a, std::size_t b) { return data.labels[a] < data.labels[b]; });
    std::map<int, std::size_t> counts;
    for (auto i : chosen) ++counts[data.labels[i]];
    std::size_t shift = 0;
    for (const auto& [label, c] : counts) shift = std::max(shift, c);
    if (shift >= k) return out;  // single class chosen: nothing to permute
    for (std::size_t i = 0; i < k; ++i) {
        out.labels[chosen[i]] = data.labels[chosen[(i + shift) % k]];
    }
    return out;
}

}  // namespace sculpt
