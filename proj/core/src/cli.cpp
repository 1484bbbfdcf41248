#include "sculpt/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>

#include "sculpt/analysis.hpp"
#include "sculpt/checkpoint.hpp"
#include "sculpt/errors.hpp"
#include "sculpt/rng.hpp"
#include "sculpt/train.hpp"

namespace sculpt {

namespace fs = std::filesystem;

const std::vector<std::string>& cli_subcommands() {
    static const std::vector<std::string> subs{"train",  "imp",         "wr",           "lrr",
                                               "cyclic-pai", "sculpt",  "coupling",     "analyze-lmc",
                                               "analyze-signs", "analyze-hessian", "summarize"};
    return subs;
}

std::string cli_usage() {
    std::string s = "usage: sculpt-lab <subcommand> --config <path> [--out <dir>] [--seed-offset N]\nsubcommands:";
    for (const auto& c : cli_subcommands()) s += " " + c;
    return s + "\n";
}

fs::path run_directory(const RunConfig& cfg, const CliOptions& opts, std::uint64_t seed) {
    return opts.out.value_or(cfg.out) / cfg.name / ("seed_" + std::to_string(seed + opts.seed_offset));
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

// ckpt_cycle<N>.bin files of a run directory, ordered by N.
std::vector<std::pair<std::size_t, fs::path>> cycle_checkpoints(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw PipelineError("run directory '" + dir.string() + "' does not exist");
    static const std::regex re("ckpt_cycle([0-9]+)\\.bin");
    std::vector<std::pair<std::size_t, fs::path>> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, re)) out.emplace_back(std::stoull(m[1].str()), entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string ckpt_tag(const fs::path& p) {
    std::string s = p.stem().string();
    if (s.rfind("ckpt_", 0) == 0) s = s.substr(5);
    return s;
}

Mask union_mask(const Mask& a, const Mask& b) {
    require_same_layout(a.layout(), b.layout(), "union_mask");
    std::vector<std::uint8_t> bits(a.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = a.kept(i) || b.kept(i);
    return Mask::from_bits(a.layout(), std::move(bits));
}

void analyze_lmc(const RunConfig& cfg, const fs::path& dir, const TrainTest& data, std::ostream& out) {
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (!cfg.analysis.lmc_a.empty() || !cfg.analysis.lmc_b.empty()) {
        pairs.emplace_back(cfg.analysis.lmc_a, cfg.analysis.lmc_b);
    } else {
        const auto cks = cycle_checkpoints(dir);
        for (std::size_t i = 0; i + 1 < cks.size(); ++i) pairs.emplace_back(cks[i].second, cks[i + 1].second);
    }
    std::string barriers = "a,b,train_loss_barrier,test_loss_barrier,train_acc_barrier,test_acc_barrier\n";
    for (const auto& [pa, pb] : pairs) {
        if (!fs::exists(pa) || !fs::exists(pb)) {
            throw PipelineError("missing checkpoint for interpolation: '" + pa.string() + "' / '" + pb.string() + "'");
        }
        const Checkpoint a = load_checkpoint(pa);
        const Checkpoint b = load_checkpoint(pb);
        if (!(a.spec == b.spec)) throw ContractError("lmc endpoints come from different models");
        const Model model = build_model(a.spec);
        LmcCurve curve = lmc_curve(model, a.params, b.params, union_mask(a.mask, b.mask), data, cfg.analysis.lmc_points,
                                   cfg.pipe.optimizer.eval_batch_size);
        curve.endpoint_a = ckpt_tag(pa);
        curve.endpoint_b = ckpt_tag(pb);
        write_lmc_csv((dir / ("lmc_" + curve.endpoint_a + "_" + curve.endpoint_b + ".csv")).string(), curve);
        barriers += curve.endpoint_a + "," + curve.endpoint_b + "," +
                    fmt(error_barrier(curve, MetricSplit::train)) + "," + fmt(error_barrier(curve, MetricSplit::test)) +
                    "," + fmt(error_barrier(curve, MetricSplit::train, BarrierMetric::accuracy)) + "," +
                    fmt(error_barrier(curve, MetricSplit::test, BarrierMetric::accuracy)) + "\n";
    }
    write_text(dir / "barriers.csv", barriers);
    out << "  " << pairs.size() << " interpolation(s) written to " << dir.string() << "\n";
}

void analyze_signs(const RunConfig& cfg, const fs::path& dir, std::ostream& out) {
    const fs::path ref_path = dir / "ckpt_theta0.bin";
    if (!fs::exists(ref_path)) throw PipelineError("missing reference checkpoint '" + ref_path.string() + "'");
    const Checkpoint ref = load_checkpoint(ref_path);
    const auto cks = cycle_checkpoints(dir);
    std::string csv = "cycle,epoch,sign_flips,agree,zero_mismatch,unmasked,overlap\n";
    for (const auto& [cycle, path] : cks) {
        const Checkpoint ck = load_checkpoint(path);
        const SignTally t = tally_signs(ref.params, ck.params, ck.mask);
        csv += std::to_string(cycle) + "," + std::to_string(ck.epoch) + "," + std::to_string(t.flips) + "," +
               std::to_string(t.agree) + "," + std::to_string(t.zero_mismatch) + "," + std::to_string(t.total()) + "," +
               fmt(sign_overlap(ref.params, ck.params, ck.mask)) + "\n";
    }
    write_text(dir / "signs.csv", csv);

    if (!cfg.analysis.compare.empty()) {
        if (cks.empty()) throw PipelineError("no cycle checkpoints in '" + dir.string() + "'");
        const Checkpoint mine = load_checkpoint(cks.back().second);
        std::string ov = "run,overlap\n";
        for (const auto& other_dir : cfg.analysis.compare) {
            const auto others = cycle_checkpoints(other_dir);
            if (others.empty()) throw PipelineError("no cycle checkpoints in '" + other_dir.string() + "'");
            const Checkpoint theirs = load_checkpoint(others.back().second);
            ov += other_dir.string() + "," + fmt(sign_overlap(mine.params, theirs.params, mine.mask)) + "\n";
        }
        write_text(dir / "overlaps.csv", ov);
    }
    out << "  sign records for " << cks.size() << " cycle(s) written to " << dir.string() << "\n";
}

void analyze_hessian(const RunConfig& cfg, const fs::path& dir, const TrainTest& data, std::uint64_t seed,
                     std::ostream& out) {
    const auto cks = cycle_checkpoints(dir);
    std::string csv = "cycle,lambda_max,converged\n";
    PowerIterationOptions opts;
    opts.max_iters = cfg.analysis.hessian_iters;
    opts.tol = cfg.analysis.hessian_tol;
    opts.samples = cfg.analysis.hessian_samples;
    opts.seed = derive_seed(seed, "hessian");
    for (const auto& [cycle, path] : cks) {
        const Checkpoint ck = load_checkpoint(path);
        const Model model = build_model(ck.spec);
        const EigenEstimate e = hessian_max_eigenvalue(model, ck.params, ck.mask, data.train, opts);
        csv += std::to_string(cycle) + "," + fmt(e.lambda) + "," + (e.converged ? "true" : "false") + "\n";
    }
    write_text(dir / "hessian.csv", csv);
    out << "  hessian estimates for " << cks.size() << " cycle(s) written to " << dir.string() << "\n";
}

std::optional<PipelineKind> pipeline_for(const std::string& sub, const RunConfig& cfg) {
    if (sub == "train") return cfg.pipeline;
    if (sub == "imp") return PipelineKind::imp;
    if (sub == "wr") return PipelineKind::wr;
    if (sub == "lrr") return PipelineKind::lrr;
    if (sub == "cyclic-pai") return PipelineKind::cyclic_pai;
    if (sub == "sculpt") return cfg.pipeline == PipelineKind::sculpt_lrr ? PipelineKind::sculpt_lrr : PipelineKind::sculpt;
    if (sub == "coupling") return PipelineKind::coupling;
    return std::nullopt;
}

}  // namespace

SummaryStat summarize_values(const std::vector<double>& values) {
    if (values.empty()) throw ContractError("summarize_values: no values");
    const double k = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= k;
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (k - 1.0));
    return {mean, 1.96 * sd / std::sqrt(k)};
}

std::size_t summarize_runs(const fs::path& root) {
    if (!fs::is_directory(root)) throw PipelineError("no runs under '" + root.string() + "'");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0 &&
            fs::exists(e.path() / "metrics.csv")) {
            dirs.push_back(e.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw PipelineError("no seed_* run directories with metrics.csv under '" + root.string() + "'");

    std::vector<TrainRecord> recs;
    std::size_t rows = std::numeric_limits<std::size_t>::max();
    for (const auto& d : dirs) {
        recs.push_back(read_metrics_csv(d / "metrics.csv"));
        rows = std::min(rows, recs.back().rows.size());
    }
    if (rows == 0) throw PipelineError("run directories under '" + root.string() + "' contain no epochs");

    using Getter = double (*)(const EpochRow&);
    const std::vector<std::pair<std::string, Getter>> metrics{
        {"train_loss", [](const EpochRow& r) { return r.train_loss; }},
        {"train_acc", [](const EpochRow& r) { return r.train_acc; }},
        {"test_loss", [](const EpochRow& r) { return r.test_loss; }},
        {"test_acc", [](const EpochRow& r) { return r.test_acc; }},
        {"sign_flips", [](const EpochRow& r) { return static_cast<double>(r.sign_flips); }},
    };

    std::string csv = "epoch,cycle,runs";
    for (const auto& [name, _] : metrics) csv += "," + name + "_mean," + name + "_ci95";
    csv += "\n";
    for (std::size_t i = 0; i < rows; ++i) {
        csv += std::to_string(recs[0].rows[i].epoch) + "," + std::to_string(recs[0].rows[i].cycle) + "," +
               std::to_string(recs.size());
        for (const auto& [name, get] : metrics) {
            std::vector<double> xs;
            for (const auto& r : recs) xs.push_back(get(r.rows[i]));
            const SummaryStat s = summarize_values(xs);
            csv += "," + fmt(s.mean) + "," + fmt(s.ci95);
        }
        csv += "\n";
    }
    write_text(root / "summary.csv", csv);

    std::string fin = "metric,mean,ci95,runs\n";
    for (const auto& [name, get] : metrics) {
        std::vector<double> xs;
        for (const auto& r : recs) xs.push_back(get(r.rows.back()));
        const SummaryStat s = summarize_values(xs);
        fin += name + "," + fmt(s.mean) + "," + fmt(s.ci95) + "," + std::to_string(recs.size()) + "\n";
    }
    std::vector<double> best;
    for (const auto& r : recs) {
        double b = 0.0;
        for (const auto& row : r.rows) b = std::max(b, row.test_acc);
        best.push_back(b);
    }
    const SummaryStat s = summarize_values(best);
    fin += "best_test_acc," + fmt(s.mean) + "," + fmt(s.ci95) + "," + std::to_string(recs.size()) + "\n";
    write_text(root / "summary_final.csv", fin);
    return dirs.size();
}

int run_command(const std::string& sub, const RunConfig& cfg, const CliOptions& opts, std::ostream& out,
                std::ostream& err) {
    const auto& subs = cli_subcommands();
    if (std::find(subs.begin(), subs.end(), sub) == subs.end()) {
        err << "unknown subcommand '" << sub << "'\n" << cli_usage();
        return 2;
    }
    try {
        if (sub == "summarize") {
            const fs::path root = opts.out.value_or(cfg.out) / cfg.name;
            const std::size_t n = summarize_runs(root);
            out << "summarized " << n << " run(s) into " << (root / "summary.csv").string() << "\n";
            return 0;
        }

        const TrainTest data = load_data(cfg.data);
        for (const std::uint64_t base : cfg.seeds) {
            const std::uint64_t seed = base + opts.seed_offset;
            const fs::path dir = cfg.analysis.run_dir.empty() ? run_directory(cfg, opts, base) : cfg.analysis.run_dir;

            if (const auto kind = pipeline_for(sub, cfg)) {
                fs::create_directories(dir);
                RunConfig echo = cfg;
                echo.pipeline = *kind;
                echo.seeds = {seed};
                echo.out = opts.out.value_or(cfg.out);
                write_text(dir / "config.cfg", echo_config(echo));

                PipelineConfig pc = cfg.pipe;
                pc.seed = seed;
                pc.out_dir = dir;
                out << pipeline_kind_name(*kind) << " seed " << seed << " -> " << dir.string() << "\n";
                const PipelineResult res = run_pipeline(*kind, pc, data);
                if (!res.record.rows.empty()) {
                    const auto& last = res.record.rows.back();
                    out << "  final: sparsity " << fmt(last.sparsity) << ", test acc " << fmt(last.test_acc) << "\n";
                }
            } else if (sub == "analyze-lmc") {
                analyze_lmc(cfg, dir, data, out);
            } else if (sub == "analyze-signs") {
                analyze_signs(cfg, dir, out);
            } else if (sub == "analyze-hessian") {
                analyze_hessian(cfg, dir, data, seed, out);
            }
        }
        return 0;
    } catch (const DivergenceError& e) {
        err << "error: training diverged at epoch " << e.epoch() << ": " << e.what() << "\n";
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
    }
    return 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse network training laboratory", "sculpt-lab"};
    std::string sub;
    std::string config;
    std::string out_dir;
    std::uint64_t seed_offset = 0;
    app.add_option("subcommand", sub, "one of: train imp wr lrr cyclic-pai sculpt coupling analyze-lmc analyze-signs "
                                      "analyze-hessian summarize")
        ->required();
    app.add_option("--config", config, "run configuration file")->required();
    app.add_option("--out", out_dir, "output root (overrides the config's `out`)");
    app.add_option("--seed-offset", seed_offset, "added to every configured seed");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << cli_usage();
        return 2;
    }

    const auto& subs = cli_subcommands();
    if (std::find(subs.begin(), subs.end(), sub) == subs.end()) {
        err << "unknown subcommand '" << sub << "'\n" << cli_usage();
        return 2;
    }
    RunConfig cfg;
    try {
        cfg = parse_config(config);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    CliOptions opts;
    if (!out_dir.empty()) opts.out = out_dir;
    opts.seed_offset = seed_offset;
    return run_command(sub, cfg, opts, out, err);
}

}  // namespace sculpt
