// Acceptance suite: one PASS / FAIL / FLAG line per criterion. Exit status is nonzero
// iff some criterion FAILs. FLAG marks a measured trend that did not go the expected
// way; it is reported but does not fail the suite.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "digits.hpp"
#include "oracles.hpp"
#include "sculpt/analysis.hpp"
#include "sculpt/checkpoint.hpp"
#include "sculpt/cli.hpp"
#include "sculpt/config.hpp"
#include "sculpt/errors.hpp"
#include "sculpt/pipelines.hpp"
#include "sculpt/prune.hpp"
#include "sculpt/train.hpp"

using namespace sculpt;
using namespace sculpt::testing;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, flag };

struct Outcome {
    Status status = Status::pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Outcome fail(std::string why) { return {Status::fail, std::move(why)}; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig moons_pipeline(std::uint64_t seed) {
    PipelineConfig c;
    c.model.widths = {2, 16, 16, 2};
    c.schedule = default_cycle();
    c.seed = seed;
    return c;
}

TrainTest moons_data() { return load_data(DataSpec{}); }

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
    const auto t0 = Clock::now();
    Rng rng(derive_seed(11, "acceptance_gradient"));
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const ModelSpec spec = random_mlp_spec(rng, 200);
        const Model model = build_model(spec);
        const ParamVector p = random_params(model.layout, rng());
        const Batch batch = random_batch(rng, 6, spec.widths.front(), spec.classes());
        const ParamVector g = loss_and_grad(model, p, batch).grad;
        const ParamVector fd =
            finite_difference_gradient([&](const ParamVector& q) { return forward_loss(model, q, batch).loss; }, p, 1e-6);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            num += (g.values[i] - fd.values[i]) * (g.values[i] - fd.values[i]);
            den += fd.values[i] * fd.values[i];
        }
        const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
        worst = std::max(worst, rel);
        if (rel > 1e-4) return fail("trial " + std::to_string(trial) + " relative error " + fmt("%.3g", rel));
    }
    const double secs = seconds_since(t0);
    if (secs >= 10.0) return fail("took " + fmt("%.1f", secs) + " s");
    return {Status::pass, "10 random MLPs, worst relative error " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome sparsity_law() {
    const auto t0 = Clock::now();
    std::string detail;
    for (const auto& widths : std::vector<std::vector<std::size_t>>{{784, 64, 32, 10}, {2, 16, 16, 2}, {10, 30, 20, 5}}) {
        ModelSpec spec;
        spec.widths = widths;
        const Model model = build_model(spec);
        const ParamVector p = initial_params(model.layout, 3);
        const auto masks = sparsity_trajectory(p, Mask::ones(model.layout), 0.2, 14);
        const double N = static_cast<double>(model.layout.prunable_total());
        for (std::size_t n = 1; n <= 14; ++n) {
            const double s = sparsity(masks[n]);
            const double want = 1.0 - std::pow(0.8, static_cast<double>(n));
            if (std::abs(s - want) > 1.0 / N) {
                return fail("N=" + std::to_string(model.layout.prunable_total()) + " level " + std::to_string(n) +
                            ": sparsity " + fmt("%.8f", s) + " vs " + fmt("%.8f", want));
            }
            if (!(s > sparsity(masks[n - 1]))) return fail("sparsity not strictly increasing at level " + std::to_string(n));
        }
        if (widths.front() == 784) {
            const double pct = 100.0 * sparsity(masks[14]);
            if (static_cast<int>(std::floor(pct)) != 95) return fail("level 14 sparsity " + fmt("%.3f", pct) + "%");
            detail = "level 14 = " + fmt("%.3f", pct) + "% (truncates to 95; nearest integer is " +
                     std::to_string(static_cast<int>(std::lround(pct))) + ")";
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 1.0) return fail("took " + fmt("%.2f", secs) + " s");
    return {Status::pass, "levels 1..14 within one parameter for N in {52544, 320, 1000}; " + detail + ", " +
                              fmt("%.2f", secs) + " s"};
}

bool equal_on_kept(const ParamVector& a, const ParamVector& b, const Mask& m, bool zeros_elsewhere) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (m.kept(i)) {
            if (std::memcmp(&a.values[i], &b.values[i], sizeof(double)) != 0) return false;
        } else if (zeros_elsewhere && a.values[i] != 0.0) {
            return false;
        }
    }
    return true;
}

Outcome rewind_exactness() {
    const auto t0 = Clock::now();
    const TrainTest data = moons_data();
    PipelineConfig cfg = moons_pipeline(5);
    cfg.levels = 3;
    cfg.warmup_epoch = 2;
    const double N = 320.0;

    auto check_law = [&](const PipelineResult& r) {
        for (const auto& lv : r.trajectory.levels) {
            const double want = 1.0 - std::pow(0.8, static_cast<double>(lv.level));
            if (std::abs(lv.sparsity - want) > 1.0 / N) return false;
        }
        return r.trajectory.levels.size() == cfg.levels + 1;
    };

    const PipelineResult imp = run_imp(cfg, data);
    for (const auto& lv : imp.trajectory.levels) {
        if (!equal_on_kept(lv.start_params, imp.theta0, lv.mask, true)) {
            return fail("IMP level " + std::to_string(lv.level) + " does not start from θ0");
        }
    }
    const PipelineResult wr = run_wr(cfg, data);
    if (!wr.theta_k) return fail("WR recorded no θ_k");
    for (const auto& lv : wr.trajectory.levels) {
        if (lv.level > 0 && !equal_on_kept(lv.start_params, *wr.theta_k, lv.mask, true)) {
            return fail("WR level " + std::to_string(lv.level) + " does not start from θ_k");
        }
    }
    const PipelineResult lrr = run_lrr(cfg, data);
    for (std::size_t n = 1; n < lrr.trajectory.levels.size(); ++n) {
        const auto& lv = lrr.trajectory.levels[n];
        if (!equal_on_kept(lv.start_params, lrr.trajectory.levels[n - 1].end_params, lv.mask, true)) {
            return fail("LRR level " + std::to_string(n) + " does not continue from level " + std::to_string(n - 1));
        }
    }
    if (!check_law(imp) || !check_law(wr) || !check_law(lrr)) return fail("trajectory sparsity off the closed form");
    const double secs = seconds_since(t0);
    if (secs >= 120.0) return fail("took " + fmt("%.1f", secs) + " s");
    return {Status::pass, "IMP/WR/LRR, 3 levels on two-moons: all surviving coordinates bit-identical, " +
                              fmt("%.1f", secs) + " s"};
}

Outcome freeze_invariant() {
    const TrainTest data = moons_data();
    PipelineConfig cfg = moons_pipeline(9);
    cfg.schedule.kind = ScheduleKind::cyclic;
    cfg.schedule.n_cycles = 3;
    cfg.start_sparsity = 0.5;
    cfg.final_sparsity = 0.9;
    cfg.pai_criterion = Criterion::random;
    std::size_t epochs = 0, masked_checked = 0;
    std::string problem;
    PipelineHooks hooks;
    hooks.on_epoch_state = [&](const Checkpoint& ck) {
        ++epochs;
        for (std::size_t i = 0; i < ck.params.size(); ++i) {
            if (ck.mask.kept(i)) continue;
            ++masked_checked;
            const std::uint64_t zero = 0;
            if (std::memcmp(&ck.params.values[i], &zero, 8) != 0 || std::memcmp(&ck.velocity[i], &zero, 8) != 0) {
                if (problem.empty()) problem = "epoch " + std::to_string(ck.epoch) + " coordinate " + std::to_string(i);
            }
        }
    };
    const PipelineResult r = run_sculpt(cfg, data, hooks);
    if (!problem.empty()) return fail("nonzero masked value or velocity at " + problem);
    const std::size_t want_epochs = 4 * cfg.schedule.cycle_epochs;
    if (epochs != want_epochs) return fail("observed " + std::to_string(epochs) + " epochs, expected " +
                                           std::to_string(want_epochs));
    if (std::abs(sparsity(r.final_mask) - 0.9) > 1.0 / 320.0) return fail("final sparsity " + fmt("%.4f", sparsity(r.final_mask)));
    return {Status::pass, std::to_string(epochs) + " epoch-end states, " + std::to_string(masked_checked) +
                              " masked (value, velocity) pairs all +0.0"};
}

Outcome hessian_oracle() {
    const auto t0 = Clock::now();
    // Quadratic ½θᵀAθ with A = diag(3, 1).
    GradientFn quad = [](const std::vector<double>& t) { return std::vector<double>{3.0 * t[0], t[1]}; };
    PowerIterationOptions q;
    q.max_iters = 1000;
    q.tol = 1e-12;
    const double full = power_iteration_max_eigenvalue(quad, {0.7, -0.4}, {1, 1}, q).lambda;
    const double proj = power_iteration_max_eigenvalue(quad, {0.7, -0.4}, {0, 1}, q).lambda;
    if (std::abs(full - 3.0) > 1e-3 || std::abs(proj - 1.0) > 1e-3) {
        return fail("quadratic: " + fmt("%.6f", full) + " / " + fmt("%.6f", proj));
    }

    Rng rng(derive_seed(21, "acceptance_hessian"));
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const ModelSpec spec = random_mlp_spec(rng, 40);
        const Model model = build_model(spec);
        const ParamVector p = random_params(model.layout, rng());
        const Batch batch = random_batch(rng, 16, spec.widths.front(), spec.classes());
        Dataset ds;
        ds.inputs = batch.inputs;
        for (double y : batch.labels.data()) ds.labels.push_back(static_cast<int>(y));
        ds.classes = spec.classes();
        const Mask ones = Mask::ones(model.layout);
        const double dense = dominant_eigenvalue(dense_fd_hessian(model, p, ones, batch), p.size());
        PowerIterationOptions opts;
        opts.max_iters = 20000;
        opts.tol = 1e-12;
        opts.samples = 0;
        opts.seed = static_cast<std::uint64_t>(trial);
        const EigenEstimate est = hessian_max_eigenvalue(model, p, ones, ds, opts);
        const double rel = std::abs(est.lambda - dense) / std::abs(dense);
        worst = std::max(worst, rel);
        if (rel > 0.01) {
            return fail("model " + std::to_string(trial) + " (" + std::to_string(p.size()) + " params): power " +
                        fmt("%.6g", est.lambda) + " vs dense " + fmt("%.6g", dense));
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 30.0) return fail("took " + fmt("%.1f", secs) + " s");
    return {Status::pass, "diag(3,1): " + fmt("%.6f", full) + ", projected " + fmt("%.6f", proj) +
                              "; 5 models worst relative gap " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome synflow_oracle() {
    std::size_t archs = 0;
    double worst = 0.0;
    Rng rng(derive_seed(31, "acceptance_synflow"));
    std::function<void(std::vector<std::size_t>&)> visit;
    std::string problem;
    visit = [&](std::vector<std::size_t>& widths) {
        if (widths.size() >= 2) {
            ModelSpec spec;
            spec.widths = widths;
            spec.bias = false;
            const Model model = build_model(spec);
            for (int rep = 0; rep < 3; ++rep) {
                const ParamVector p = random_params(model.layout, rng());
                std::vector<std::uint8_t> bits(p.size(), 1);
                if (rep > 0) {
                    for (auto& b : bits) b = uniform_open01(rng) < 0.7;
                }
                const Mask mask = Mask::from_bits(model.layout, bits);
                const auto got = score_synflow(model, p, mask).values;
                const auto want = synflow_by_paths(model, p, mask);
                for (std::size_t i = 0; i < p.size(); ++i) {
                    if (std::isinf(want[i])) {
                        if (!(std::isinf(got[i]) && got[i] < 0)) problem = "masked score not -inf";
                        continue;
                    }
                    const double err = std::abs(got[i] - want[i]);
                    const double rel = want[i] == 0.0 ? err : err / std::abs(want[i]);
                    worst = std::max(worst, rel);
                    if (rel > 1e-10 && problem.empty()) {
                        problem = "widths " + std::to_string(widths.size()) + "-layer entry " + std::to_string(i) + ": " +
                                  fmt("%.17g", got[i]) + " vs " + fmt("%.17g", want[i]);
                    }
                }
            }
            ++archs;
        }
        if (widths.size() == 4) return;
        for (std::size_t w = 1; w <= 3; ++w) {
            widths.push_back(w);
            visit(widths);
            widths.pop_back();
        }
    };
    std::vector<std::size_t> start;
    visit(start);
    if (!problem.empty()) return fail(problem);
    return {Status::pass, std::to_string(archs) + " bias-free architectures (widths <= 3, depth <= 3), dense and random "
                                                  "masks; worst relative error " + fmt("%.2e", worst)};
}

Outcome lmc_contracts() {
    const TrainTest data = moons_data();
    PipelineConfig cfg = moons_pipeline(13);
    const Model model = build_model(cfg.model);
    const Mask mask = Mask::ones(model.layout);
    LrSchedule sched = default_cycle();
    sched.kind = ScheduleKind::cyclic;
    sched.n_cycles = 2;
    const TrainResult tr = train_cycles(model, initial_params(model.layout, 13), mask, sched, data, cfg.optimizer, 13);
    const ParamVector& a = tr.checkpoints.at(0).params;
    const ParamVector& b = tr.checkpoints.at(1).params;
    const LmcCurve c = lmc_curve(model, a, b, mask, data);
    double worst = 0.0;
    for (const auto& [end, idx] : {std::pair{&a, std::size_t{0}}, std::pair{&b, c.alphas.size() - 1}}) {
        const LossAcc tr_e = evaluate(model, *end, mask, data.train);
        const LossAcc te_e = evaluate(model, *end, mask, data.test);
        for (double d : {c.train_loss[idx] - tr_e.loss, c.test_loss[idx] - te_e.loss, c.train_acc[idx] - tr_e.accuracy,
                         c.test_acc[idx] - te_e.accuracy}) {
            worst = std::max(worst, std::abs(d));
        }
    }
    if (worst > 1e-12) return fail("endpoint mismatch " + fmt("%.3g", worst));

    const std::vector<double> constant(21, 0.7310585786300049);
    if (error_barrier(lmc_alphas(21), constant) != 0.0) return fail("constant values have a nonzero barrier");
    const LmcCurve flat = lmc_curve(model, a, a, mask, data);
    if (error_barrier(flat, MetricSplit::train) != 0.0 || error_barrier(flat, MetricSplit::test) != 0.0) {
        return fail("constant curve has a nonzero barrier");
    }

    // ½θᵀAθ with A = MᵀM + I: along the line the curve is convex, lying ⅛·dᵀAd below
    // its chord at α = ½; the negated curve therefore has barrier exactly ⅛·dᵀAd.
    Rng rng(derive_seed(41, "acceptance_lmc"));
    const std::size_t n = 5;
    std::vector<double> M(n * n), A(n * n, 0.0), pa(n), pb(n);
    for (auto& v : M) v = standard_normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < n; ++k) A[i * n + j] += M[k * n + i] * M[k * n + j];
        }
        A[i * n + i] += 1.0;
    }
    for (auto& v : pa) v = standard_normal(rng);
    for (auto& v : pb) v = standard_normal(rng);
    auto quad = [&](const std::vector<double>& t) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) s += 0.5 * t[i] * A[i * n + j] * t[j];
        }
        return s;
    };
    double dAd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) dAd += (pb[i] - pa[i]) * A[i * n + j] * (pb[j] - pa[j]);
    }
    const auto alphas = lmc_alphas(21);
    auto vals = interpolate_values(quad, pa, pb, alphas);
    const double convex = error_barrier(alphas, vals);
    for (auto& v : vals) v = -v;
    const double concave = error_barrier(alphas, vals);
    const double closed = dAd / 8.0;
    if (convex != 0.0) return fail("convex quadratic barrier " + fmt("%.3g", convex) + " (expected 0)");
    if (std::abs(concave - closed) > 1e-10) {
        return fail("quadratic barrier " + fmt("%.17g", concave) + " vs closed form " + fmt("%.17g", closed));
    }
    return {Status::pass, "endpoint gap " + fmt("%.1e", worst) + "; constant curve 0; quadratic barrier " +
                              fmt("%.12f", concave) + " = dᵀAd/8 (gap " + fmt("%.1e", std::abs(concave - closed)) + ")"};
}

// ---------------------------------------------------------------------------
// Desk-scale digits runs shared by criteria 8, 9 and 11.

struct DigitRuns {
    fs::path root;
    IdxFiles files;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::map<std::string, RunConfig> configs;  // arm -> config
    double seconds = 0.0;
    std::string error;
};

RunConfig digits_config(const IdxFiles& f, const fs::path& out, const std::string& arm) {
    std::ostringstream c;
    c << "name = " << arm << "\npipeline = cyclic_pai\nseeds = 0,1,2,3,4\nout = " << out.string() << "\n"
      << "model.widths = 784,64,32,10\n"
      << "data.kind = idx\ndata.train_images = " << f.train_images.string() << "\ndata.train_labels = "
      << f.train_labels.string() << "\ndata.test_images = " << f.test_images.string()
      << "\ndata.test_labels = " << f.test_labels.string() << "\ndata.train_size = 2000\ndata.test_size = 1000\n"
      << "prune.criterion = random\nprune.sparsity = 0.9\n";
    if (arm == "cyclic") {
        c << "schedule.kind = cyclic\nschedule.cycle_epochs = 20\nschedule.cycles = 5\n";
    } else {
        c << "schedule.kind = one_cycle\nschedule.cycle_epochs = 100\nschedule.cycles = 1\n";
    }
    return parse_config_text(c.str());
}

DigitRuns& digit_runs() {
    static DigitRuns runs = [] {
        DigitRuns r;
        r.root = scratch_dir("acceptance_digits");
        r.files = digit_idx_files(r.root / "idx", 2000, 1000, 2024);
        const auto t0 = Clock::now();
        for (const std::string arm : {"cyclic", "one_cycle"}) {
            r.configs[arm] = digits_config(r.files, r.root / "runs", arm);
            std::ostringstream out, err;
            if (run_command("cyclic-pai", r.configs[arm], {}, out, err) != 0) r.error += arm + ": " + err.str();
        }
        r.seconds = seconds_since(t0);
        return r;
    }();
    return runs;
}

double final_test_acc(const fs::path& dir) { return read_metrics_csv(dir / "metrics.csv").rows.back().test_acc; }

Outcome cyclic_trend() {
    DigitRuns& r = digit_runs();
    if (!r.error.empty()) return fail(r.error);
    std::string per;
    double sum_c = 0, sum_o = 0;
    for (auto s : r.seeds) {
        const double c = final_test_acc(run_directory(r.configs["cyclic"], {}, s));
        const double o = final_test_acc(run_directory(r.configs["one_cycle"], {}, s));
        sum_c += c;
        sum_o += o;
        per += " s" + std::to_string(s) + "=" + fmt("%.3f", c) + "/" + fmt("%.3f", o);
    }
    const double k = static_cast<double>(r.seeds.size());
    const double diff = sum_c / k - sum_o / k;
    const std::string detail = "data: " + r.files.provenance + "; mean test acc cyclic " + fmt("%.4f", sum_c / k) +
                               " vs one-cycle " + fmt("%.4f", sum_o / k) + " (diff " + fmt("%+.4f", diff) +
                               "); per seed cyclic/one-cycle:" + per + "; " + fmt("%.0f", r.seconds) + " s";
    if (r.seconds >= 20 * 60) return fail("runtime over 20 min; " + detail);
    if (diff < 0) return {Status::flag, "direction not reproduced on seeds 0-4; " + detail};
    return {Status::pass, detail};
}

Outcome sign_flip_bookkeeping() {
    DigitRuns& r = digit_runs();
    if (!r.error.empty()) return fail(r.error);
    std::size_t checked = 0;
    std::vector<double> early;
    for (const auto& [arm, cfg] : r.configs) {
        for (auto s : r.seeds) {
            const fs::path dir = run_directory(cfg, {}, s);
            const Checkpoint ref = load_checkpoint(dir / "ckpt_theta0.bin");
            const TrainRecord rec = read_metrics_csv(dir / "metrics.csv");
            std::map<std::size_t, std::size_t> by_cycle;
            for (const auto& entry : fs::directory_iterator(dir)) {
                const std::string name = entry.path().filename().string();
                if (name.rfind("ckpt_cycle", 0) != 0) continue;
                const Checkpoint ck = load_checkpoint(entry.path());
                const std::size_t brute = brute_force_sign_flips(ref.params, ck.params, ck.mask);
                const std::size_t lib = count_sign_flips(ref.params, ck.params, ck.mask);
                const auto row = std::find_if(rec.rows.begin(), rec.rows.end(),
                                              [&](const EpochRow& e) { return e.epoch + 1 == ck.epoch; });
                if (row == rec.rows.end()) return fail(dir.string() + ": no metrics row for " + name);
                if (brute != lib || brute != row->sign_flips) {
                    return fail(dir.string() + "/" + name + ": brute force " + std::to_string(brute) + ", library " +
                                std::to_string(lib) + ", metrics " + std::to_string(row->sign_flips));
                }
                by_cycle[ck.cycle] = brute;
                ++checked;
            }
            if (arm == "cyclic" && by_cycle.size() > 1 && by_cycle.rbegin()->second > 0) {
                early.push_back(static_cast<double>(by_cycle.begin()->second) /
                                static_cast<double>(by_cycle.rbegin()->second));
            }
        }
    }
    const double share = early.empty() ? 0.0 : std::accumulate(early.begin(), early.end(), 0.0) / early.size();
    return {Status::pass, std::to_string(checked) + " cycle checkpoints recounted exactly; measured: first cycle holds " +
                              fmt("%.0f", 100 * share) + "% of the final flip count (cyclic arm mean)"};
}

Outcome label_noise_protocol() {
    std::vector<std::vector<double>> centers;
    for (int c = 0; c < 10; ++c) centers.push_back({std::cos(c * 0.6283), std::sin(c * 0.6283)});
    const Dataset d = gen_gaussian_blobs(1000, centers, 0.3, 77);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Dataset noisy = inject_label_noise(d, 0.15, seed);
        std::size_t changed = 0;
        std::vector<int> before(10, 0), after(10, 0);
        for (std::size_t i = 0; i < d.size(); ++i) {
            changed += d.labels[i] != noisy.labels[i];
            ++before[static_cast<std::size_t>(d.labels[i])];
            ++after[static_cast<std::size_t>(noisy.labels[i])];
        }
        if (changed != 150) return fail("seed " + std::to_string(seed) + ": " + std::to_string(changed) + " labels changed");
        if (before != after) return fail("seed " + std::to_string(seed) + ": class counts changed");
        if (!(noisy.inputs == d.inputs)) return fail("inputs modified");
    }
    return {Status::pass, "10 seeds: exactly 150 of 1000 labels changed, all class counts 100"};
}

Outcome determinism() {
    const fs::path root = scratch_dir("acceptance_determinism");
    const std::string lab = SCULPT_LAB_PATH;
    auto write_cfg = [&](const std::string& name, const std::string& extra) {
        const fs::path p = root / (name + ".cfg");
        std::ofstream(p) << "name = " << name << "\nseeds = 4\nmodel.widths = 2,16,16,2\ndata.n = 300\n"
                         << "schedule.cycle_epochs = 6\nschedule.warmup_epochs = 1\nschedule.drop_epochs = 3,5\n"
                         << "prune.levels = 2\n" << extra;
        return p;
    };
    struct Job {
        std::string sub, name, extra;
    };
    const std::vector<Job> jobs{
        {"imp", "imp", ""},
        {"wr", "wr", ""},
        {"lrr", "lrr", ""},
        {"cyclic-pai", "pai", "schedule.kind = cyclic\nschedule.cycles = 2\nprune.criterion = snip\n"},
        {"sculpt", "sculpt", "schedule.kind = cyclic\nschedule.cycles = 2\nprune.criterion = synflow\n"
                   "prune.start_sparsity = 0.5\nprune.final_sparsity = 0.8\n"},
        {"coupling", "coupling",
         "coupling.mask_source = checkpoint\ncoupling.mask_checkpoint = " + (root / "A/lrr/seed_4/ckpt_cycle2.bin").string() +
             "\ncoupling.init = warmup\ncoupling.init_checkpoint = " + (root / "A/lrr/seed_4/ckpt_warmup.bin").string() +
             "\ncoupling.perturb_fraction = 0.2\n"},
    };
    std::size_t files = 0;
    for (const auto& job : jobs) {
        const fs::path cfg = write_cfg(job.name, job.extra);
        for (const char* side : {"A", "B"}) {
            const std::string cmd = "\"" + lab + "\" " + job.sub + " --config \"" + cfg.string() + "\" --out \"" +
                                    (root / side).string() + "\" > /dev/null";
            if (std::system(cmd.c_str()) != 0) return fail("command failed: " + cmd);
        }
        const fs::path a = root / "A" / job.name / "seed_4", b = root / "B" / job.name / "seed_4";
        for (const auto& entry : fs::directory_iterator(a)) {
            const std::string name = entry.path().filename().string();
            if (name != "metrics.csv" && name.rfind("ckpt_", 0) != 0) continue;
            if (!fs::exists(b / name) || slurp(a / name) != slurp(b / name)) {
                return fail(job.name + ": " + name + " differs between executions");
            }
            ++files;
        }
    }

    // Rerun one of the digits runs in this process and compare with the first execution.
    DigitRuns& r = digit_runs();
    if (!r.error.empty()) return fail(r.error);
    RunConfig cfg = r.configs["cyclic"];
    cfg.seeds = {0};
    CliOptions opts;
    opts.out = root / "digits";
    std::ostringstream out, err;
    if (run_command("cyclic-pai", cfg, opts, out, err) != 0) return fail(err.str());
    const fs::path a = run_directory(cfg, {}, 0), b = run_directory(cfg, opts, 0);
    for (const std::string name : {"metrics.csv", "ckpt_cycle4.bin"}) {
        if (slurp(a / name) != slurp(b / name)) return fail("digits cyclic seed 0: " + name + " differs");
        ++files;
    }
    return {Status::pass, "6 pipelines run twice in separate processes plus a digits rerun: " + std::to_string(files) +
                              " metrics/checkpoint files bit-identical"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient oracle", gradient_oracle},
        {2, "sparsity law", sparsity_law},
        {3, "rewind exactness", rewind_exactness},
        {4, "freeze invariant", freeze_invariant},
        {5, "hessian oracle", hessian_oracle},
        {6, "synflow oracle", synflow_oracle},
        {7, "lmc contracts", lmc_contracts},
        {8, "cyclic training trend", cyclic_trend},
        {9, "sign-flip bookkeeping", sign_flip_bookkeeping},
        {10, "label-noise protocol", label_noise_protocol},
        {11, "determinism", determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::flag ? "FLAG" : "FAIL";
        if (o.status == Status::fail) ++failures;
        std::cout << "[" << tag << "] criterion " << c.id << " " << c.name << ": " << o.detail << std::endl;
    }
    std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed" : "acceptance: all passed")
              << std::endl;
    return failures ? 1 : 0;
}
