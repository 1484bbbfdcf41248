#include "sculpt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "sculpt/errors.hpp"
#include "sculpt/rng.hpp"

namespace sculpt {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::string cell;
    std::stringstream ss(s);
    while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
    return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("invalid value '" + value + "' for key '" + key + "': expected " + expected);
}

double to_double(const std::string& key, const std::string& v) {
    double d = 0.0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, d);
    if (ec != std::errc() || p != end || !std::isfinite(d)) bad(key, v, "a finite number");
    return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || p != end) bad(key, v, "a non-negative integer");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    bad(key, v, "true or false");
}

double in_range(const std::string& key, const std::string& v, double lo, double hi, bool lo_open, bool hi_open) {
    const double d = to_double(key, v);
    const bool ok = (lo_open ? d > lo : d >= lo) && (hi_open ? d < hi : d <= hi);
    if (!ok) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "a number in %c%g, %g%c", lo_open ? '(' : '[', lo, hi, hi_open ? ')' : ']');
        bad(key, v, buf);
    }
    return d;
}

std::size_t at_least(const std::string& key, const std::string& v, std::size_t lo) {
    const auto x = to_u64(key, v);
    if (x < lo) bad(key, v, "an integer >= " + std::to_string(lo));
    return static_cast<std::size_t>(x);
}

std::vector<std::size_t> size_list(const std::string& key, const std::string& v, std::size_t lo) {
    std::vector<std::size_t> out;
    for (const auto& c : split(v, ',')) out.push_back(at_least(key, c, lo));
    return out;
}

std::string fmt(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

template <class T>
std::string join(const std::vector<T>& xs, const char* sep = ",") {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += sep;
        if constexpr (std::is_floating_point_v<T>) out += fmt(xs[i]);
        else if constexpr (std::is_same_v<T, fs::path>) out += xs[i].string();
        else out += std::to_string(xs[i]);
    }
    return out;
}

std::string opt_size(const std::optional<std::size_t>& x) { return x ? std::to_string(*x) : "none"; }

template <class F>
auto wrap(const std::string& key, const std::string& v, F&& f) {
    try {
        return f(v);
    } catch (const ConfigError& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

struct Key {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SCULPT_KEY(name, setter, getter) \
    keys[name] = Key{[](RunConfig& c, const std::string& v) { \
                         [[maybe_unused]] const std::string key = name; \
                         setter; \
                     }, \
                     [](const RunConfig& c) -> std::string { return getter; }}

const std::map<std::string, Key>& key_table() {
    static const std::map<std::string, Key> table = [] {
        std::map<std::string, Key> keys;

        SCULPT_KEY("name",
                   if (v.empty() || v.find('/') != std::string::npos) bad(key, v, "a non-empty name without '/'");
                   c.name = v, c.name);
        SCULPT_KEY("pipeline", c.pipeline = wrap(key, v, parse_pipeline_kind), pipeline_kind_name(c.pipeline));
        SCULPT_KEY("seeds",
                   {
                       c.seeds.clear();
                       for (const auto& s : split(v, ',')) c.seeds.push_back(to_u64(key, s));
                       if (c.seeds.empty()) bad(key, v, "a non-empty comma-separated list of seeds");
                   },
                   join(c.seeds));
        SCULPT_KEY("out", c.out = v, c.out.string());

        SCULPT_KEY("model.kind", c.pipe.model.kind = wrap(key, v, parse_model_kind), model_kind_name(c.pipe.model.kind));
        SCULPT_KEY("model.widths", c.pipe.model.widths = size_list(key, v, 1), join(c.pipe.model.widths));
        SCULPT_KEY("model.bias", c.pipe.model.bias = to_bool(key, v), c.pipe.model.bias ? "true" : "false");
        SCULPT_KEY("model.in_channels", c.pipe.model.in_channels = at_least(key, v, 1),
                   std::to_string(c.pipe.model.in_channels));
        SCULPT_KEY("model.in_height", c.pipe.model.in_height = at_least(key, v, 1), std::to_string(c.pipe.model.in_height));
        SCULPT_KEY("model.in_width", c.pipe.model.in_width = at_least(key, v, 1), std::to_string(c.pipe.model.in_width));
        SCULPT_KEY("model.conv_channels", c.pipe.model.conv_channels = size_list(key, v, 1),
                   join(c.pipe.model.conv_channels));
        SCULPT_KEY("model.kernel", c.pipe.model.kernel = at_least(key, v, 1), std::to_string(c.pipe.model.kernel));
        SCULPT_KEY("model.padding", c.pipe.model.padding = at_least(key, v, 0), std::to_string(c.pipe.model.padding));
        SCULPT_KEY("model.pool", c.pipe.model.pool = at_least(key, v, 1), std::to_string(c.pipe.model.pool));

        SCULPT_KEY("data.kind",
                   if (v != "two_moons" && v != "blobs" && v != "idx") bad(key, v, "two_moons, blobs or idx");
                   c.data.kind = v, c.data.kind);
        SCULPT_KEY("data.n", c.data.n = at_least(key, v, 2), std::to_string(c.data.n));
        SCULPT_KEY("data.noise", c.data.noise = in_range(key, v, 0.0, 1e6, false, false), fmt(c.data.noise));
        SCULPT_KEY("data.centers",
                   {
                       c.data.centers.clear();
                       for (const auto& pt : split(v, ';')) {
                           std::vector<double> xs;
                           for (const auto& x : split(pt, ',')) xs.push_back(to_double(key, x));
                           c.data.centers.push_back(xs);
                       }
                   },
                   [&] {
                       std::vector<std::string> pts;
                       for (const auto& pt : c.data.centers) pts.push_back(join(pt));
                       std::string s;
                       for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? ";" : "") + pts[i];
                       return s;
                   }());
        SCULPT_KEY("data.sd", c.data.sd = in_range(key, v, 0.0, 1e6, false, false), fmt(c.data.sd));
        SCULPT_KEY("data.test_fraction", c.data.test_fraction = in_range(key, v, 0.0, 1.0, true, true),
                   fmt(c.data.test_fraction));
        SCULPT_KEY("data.train_images", c.data.train_images = v, c.data.train_images.string());
        SCULPT_KEY("data.train_labels", c.data.train_labels = v, c.data.train_labels.string());
        SCULPT_KEY("data.test_images", c.data.test_images = v, c.data.test_images.string());
        SCULPT_KEY("data.test_labels", c.data.test_labels = v, c.data.test_labels.string());
        SCULPT_KEY("data.train_size", c.data.train_size = at_least(key, v, 0), std::to_string(c.data.train_size));
        SCULPT_KEY("data.test_size", c.data.test_size = at_least(key, v, 0), std::to_string(c.data.test_size));
        SCULPT_KEY("data.label_noise", c.data.label_noise = in_range(key, v, 0.0, 1.0, false, false),
                   fmt(c.data.label_noise));
        SCULPT_KEY("data.standardize", c.data.standardize = to_bool(key, v), c.data.standardize ? "true" : "false");
        SCULPT_KEY("data.seed", c.data.seed = to_u64(key, v), std::to_string(c.data.seed));

        SCULPT_KEY("schedule.kind", c.pipe.schedule.kind = wrap(key, v, parse_schedule_kind),
                   schedule_kind_name(c.pipe.schedule.kind));
        SCULPT_KEY("schedule.cycle_epochs", c.pipe.schedule.cycle_epochs = at_least(key, v, 1),
                   std::to_string(c.pipe.schedule.cycle_epochs));
        SCULPT_KEY("schedule.cycles", c.pipe.schedule.n_cycles = at_least(key, v, 1),
                   std::to_string(c.pipe.schedule.n_cycles));
        SCULPT_KEY("schedule.peak_lr", c.pipe.schedule.peak_lr = in_range(key, v, 0.0, 1e6, true, false),
                   fmt(c.pipe.schedule.peak_lr));
        SCULPT_KEY("schedule.warmup_epochs", c.pipe.schedule.warmup_epochs = at_least(key, v, 0),
                   std::to_string(c.pipe.schedule.warmup_epochs));
        SCULPT_KEY("schedule.drop_epochs", c.pipe.schedule.drop_epochs = size_list(key, v, 0),
                   join(c.pipe.schedule.drop_epochs));
        SCULPT_KEY("schedule.drop_factor", c.pipe.schedule.drop_factor = in_range(key, v, 1.0, 1e12, false, false),
                   fmt(c.pipe.schedule.drop_factor));
        SCULPT_KEY("schedule.floor_ratio", c.pipe.schedule.floor_ratio = in_range(key, v, 0.0, 1.0, true, true),
                   fmt(c.pipe.schedule.floor_ratio));
        SCULPT_KEY("schedule.one_cycle_up", c.pipe.schedule.one_cycle_up = in_range(key, v, 0.0, 1.0, true, true),
                   fmt(c.pipe.schedule.one_cycle_up));

        SCULPT_KEY("optim.momentum", c.pipe.optimizer.momentum = in_range(key, v, 0.0, 1.0, false, true),
                   fmt(c.pipe.optimizer.momentum));
        SCULPT_KEY("optim.weight_decay", c.pipe.optimizer.weight_decay = in_range(key, v, 0.0, 1.0, false, false),
                   fmt(c.pipe.optimizer.weight_decay));
        SCULPT_KEY("optim.batch_size", c.pipe.optimizer.batch_size = at_least(key, v, 1),
                   std::to_string(c.pipe.optimizer.batch_size));
        SCULPT_KEY("optim.eval_batch_size", c.pipe.optimizer.eval_batch_size = at_least(key, v, 1),
                   std::to_string(c.pipe.optimizer.eval_batch_size));

        SCULPT_KEY("prune.levels", c.pipe.levels = at_least(key, v, 0), std::to_string(c.pipe.levels));
        SCULPT_KEY("prune.fraction", c.pipe.prune_fraction = in_range(key, v, 0.0, 1.0, true, true),
                   fmt(c.pipe.prune_fraction));
        SCULPT_KEY("prune.prune_after_first_cycle", c.pipe.prune_after_first_cycle = to_bool(key, v),
                   c.pipe.prune_after_first_cycle ? "true" : "false");
        SCULPT_KEY("prune.criterion", c.pipe.pai_criterion = wrap(key, v, parse_criterion),
                   criterion_name(c.pipe.pai_criterion));
        SCULPT_KEY("prune.allocation",
                   if (v == "global") c.pipe.allocation.reset();
                   else c.pipe.allocation = wrap(key, v, parse_scheme),
                   c.pipe.allocation ? scheme_name(*c.pipe.allocation) : "global");
        SCULPT_KEY("prune.sparsity", c.pipe.sparsity = in_range(key, v, 0.0, 1.0, false, true), fmt(c.pipe.sparsity));
        SCULPT_KEY("prune.start_sparsity", c.pipe.start_sparsity = in_range(key, v, 0.0, 1.0, false, true),
                   fmt(c.pipe.start_sparsity));
        SCULPT_KEY("prune.final_sparsity", c.pipe.final_sparsity = in_range(key, v, 0.0, 1.0, false, true),
                   fmt(c.pipe.final_sparsity));
        SCULPT_KEY("prune.score_samples", c.pipe.score_samples = at_least(key, v, 1),
                   std::to_string(c.pipe.score_samples));

        SCULPT_KEY("rewind.warmup_epoch", c.pipe.warmup_epoch = at_least(key, v, 0),
                   std::to_string(c.pipe.warmup_epoch));

        SCULPT_KEY("coupling.mask_source",
                   if (v == "pai") c.pipe.mask_source.kind = MaskSourceKind::pai;
                   else if (v == "checkpoint") c.pipe.mask_source.kind = MaskSourceKind::checkpoint;
                   else bad(key, v, "pai or checkpoint"),
                   c.pipe.mask_source.kind == MaskSourceKind::pai ? "pai" : "checkpoint");
        SCULPT_KEY("coupling.mask_checkpoint", c.pipe.mask_source.checkpoint = v,
                   c.pipe.mask_source.checkpoint.string());
        SCULPT_KEY("coupling.init", c.pipe.init_source.kind = wrap(key, v, parse_init_source),
                   init_source_name(c.pipe.init_source.kind));
        SCULPT_KEY("coupling.init_checkpoint", c.pipe.init_source.checkpoint = v,
                   c.pipe.init_source.checkpoint.string());
        SCULPT_KEY("coupling.warmup_epoch",
                   if (v == "none") c.pipe.init_source.warmup_epoch.reset();
                   else c.pipe.init_source.warmup_epoch = at_least(key, v, 0),
                   opt_size(c.pipe.init_source.warmup_epoch));
        SCULPT_KEY("coupling.perturb_fraction", c.pipe.perturb_fraction = in_range(key, v, 0.0, 1.0, false, false),
                   fmt(c.pipe.perturb_fraction));
        SCULPT_KEY("coupling.perturb_mode", c.pipe.perturb_mode = wrap(key, v, parse_perturb_mode),
                   perturb_mode_name(c.pipe.perturb_mode));
        SCULPT_KEY("coupling.cycles",
                   if (v == "none") c.pipe.coupling_cycles.reset();
                   else c.pipe.coupling_cycles = at_least(key, v, 0),
                   opt_size(c.pipe.coupling_cycles));

        SCULPT_KEY("analysis.run_dir", c.analysis.run_dir = v, c.analysis.run_dir.string());
        SCULPT_KEY("analysis.lmc_points", c.analysis.lmc_points = at_least(key, v, 3),
                   std::to_string(c.analysis.lmc_points));
        SCULPT_KEY("analysis.lmc_a", c.analysis.lmc_a = v, c.analysis.lmc_a.string());
        SCULPT_KEY("analysis.lmc_b", c.analysis.lmc_b = v, c.analysis.lmc_b.string());
        SCULPT_KEY("analysis.compare",
                   {
                       c.analysis.compare.clear();
                       for (const auto& p : split(v, ',')) c.analysis.compare.emplace_back(p);
                   },
                   join(c.analysis.compare));
        SCULPT_KEY("analysis.hessian_samples", c.analysis.hessian_samples = at_least(key, v, 1),
                   std::to_string(c.analysis.hessian_samples));
        SCULPT_KEY("analysis.hessian_iters", c.analysis.hessian_iters = at_least(key, v, 1),
                   std::to_string(c.analysis.hessian_iters));
        SCULPT_KEY("analysis.hessian_tol", c.analysis.hessian_tol = in_range(key, v, 0.0, 1.0, true, false),
                   fmt(c.analysis.hessian_tol));
        return keys;
    }();
    return table;
}

#undef SCULPT_KEY

void validate(const RunConfig& c) {
    try {
        c.pipe.model.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    try {
        c.pipe.schedule.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("schedule: ") + e.what());
    }
    if (c.data.kind == "idx" && (c.data.train_images.empty() || c.data.train_labels.empty())) {
        throw ConfigError("data.kind = idx requires data.train_images and data.train_labels");
    }
    if (c.data.test_images.empty() != c.data.test_labels.empty()) {
        throw ConfigError("data.test_images and data.test_labels must be given together");
    }
    if (c.data.kind == "blobs") {
        if (c.data.centers.size() < 2) throw ConfigError("data.centers: need at least two centers");
        for (const auto& ct : c.data.centers) {
            if (ct.size() != c.data.centers.front().size() || ct.empty()) {
                throw ConfigError("data.centers: all centers need the same positive dimension");
            }
        }
    }
    if (c.pipe.mask_source.kind == MaskSourceKind::checkpoint && c.pipe.mask_source.checkpoint.empty()) {
        throw ConfigError("coupling.mask_source = checkpoint requires coupling.mask_checkpoint");
    }
    if (c.pipe.init_source.kind != InitSourceKind::random && c.pipe.init_source.checkpoint.empty()) {
        throw ConfigError("coupling.init = " + std::string(init_source_name(c.pipe.init_source.kind)) +
                          " requires coupling.init_checkpoint");
    }
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& [k, _] : key_table()) out.push_back(k);
    return out;
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    const auto& table = key_table();
    std::set<std::string> seen;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        }
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        const auto it = table.find(key);
        if (it == table.end()) throw ConfigError("unknown key '" + key + "' on line " + std::to_string(lineno));
        if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "' on line " + std::to_string(lineno));
        it->second.set(cfg, value);
    }
    validate(cfg);
    return cfg;
}

RunConfig parse_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string echo_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [k, key] : key_table()) out += k + " = " + key.get(cfg) + "\n";
    return out;
}

TrainTest load_data(const DataSpec& spec) {
    TrainTest tt;
    if (spec.kind == "two_moons") {
        tt = split_train_test(gen_two_moons(spec.n, spec.noise, derive_seed(spec.seed, "data")), spec.test_fraction,
                              derive_seed(spec.seed, "split"));
    } else if (spec.kind == "blobs") {
        tt = split_train_test(gen_gaussian_blobs(spec.n, spec.centers, spec.sd, derive_seed(spec.seed, "data")),
                              spec.test_fraction, derive_seed(spec.seed, "split"));
    } else if (spec.kind == "idx") {
        Dataset train = load_idx(spec.train_images, spec.train_labels);
        if (spec.test_images.empty()) {
            tt = split_train_test(train, spec.test_fraction, derive_seed(spec.seed, "split"));
        } else {
            tt.train = std::move(train);
            tt.test = load_idx(spec.test_images, spec.test_labels);
        }
    } else {
        throw ConfigError("unknown data.kind '" + spec.kind + "'");
    }
    if (spec.train_size) tt.train = take(tt.train, std::min(spec.train_size, tt.train.size()));
    if (spec.test_size) tt.test = take(tt.test, std::min(spec.test_size, tt.test.size()));
    tt.train.split = Split::train;
    tt.test.split = Split::test;
    if (spec.label_noise > 0.0) {
        tt.train = inject_label_noise(tt.train, spec.label_noise, derive_seed(spec.seed, "label_noise"));
    }
    if (spec.standardize) {
        const Standardizer st = fit_standardizer(tt.train);
        st.apply(tt.train);
        st.apply(tt.test);
    }
    tt.train.validate();
    tt.test.validate();
    return tt;
}

}  // namespace sculpt
