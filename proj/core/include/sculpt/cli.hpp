#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sculpt/config.hpp"

namespace sculpt {

struct CliOptions {
    std::optional<std::filesystem::path> out;  // overrides the config's `out`
    std::uint64_t seed_offset = 0;
};

const std::vector<std::string>& cli_subcommands();
std::string cli_usage();

// Directory of one seed's run: <out>/<name>/seed_<seed>.
std::filesystem::path run_directory(const RunConfig& cfg, const CliOptions& opts, std::uint64_t seed);

// Executes a subcommand over every configured seed. Returns the process exit status:
// 0 on success, 1 on a pipeline or analysis failure, 2 on a usage error. Diagnostics
// go to `err`, progress to `out`.
int run_command(const std::string& subcommand, const RunConfig& cfg, const CliOptions& opts, std::ostream& out,
                std::ostream& err);

// Full entry point: `<subcommand> --config <path> [--out <dir>] [--seed-offset N]`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct SummaryStat {
    double mean = 0.0;
    double ci95 = 0.0;  // 1.96 · sample sd / √k; 0 when k = 1
};

SummaryStat summarize_values(const std::vector<double>& values);

// Aggregates metrics.csv of every seed_* directory under `root` into summary.csv
// (per epoch) and summary_final.csv (last epoch). Returns the number of runs found.
std::size_t summarize_runs(const std::filesystem::path& root);

}  // namespace sculpt
