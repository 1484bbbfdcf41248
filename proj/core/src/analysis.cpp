#include "sculpt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "sculpt/errors.hpp"
#include "sculpt/rng.hpp"
#include "sculpt/train.hpp"

namespace sculpt {

namespace {

int sign_state(double v) { return (v > 0.0) - (v < 0.0); }

template <class F>
void for_each_weight(const Mask& mask, F&& f) {
    for (const auto& seg : mask.layout().segments()) {
        if (!seg.prunable) continue;
        for (std::size_t i = 0; i < seg.size; ++i) {
            if (mask.kept(seg.offset + i)) f(seg.offset + i);
        }
    }
}

}  // namespace

SignTally tally_signs(const ParamVector& reference, const ParamVector& current, const Mask& mask) {
    require_same_layout(reference.layout, current.layout, "tally_signs");
    require_same_layout(reference.layout, mask.layout(), "tally_signs");
    SignTally t;
    for_each_weight(mask, [&](std::size_t i) {
        const int a = sign_state(reference.values[i]);
        const int b = sign_state(current.values[i]);
        if (a == b) ++t.agree;
        else if (a == 0 || b == 0) ++t.zero_mismatch;
        else ++t.flips;
    });
    return t;
}

std::size_t count_sign_flips(const ParamVector& reference, const ParamVector& current, const Mask& mask) {
    return tally_signs(reference, current, mask).flips;
}

double sign_overlap(const ParamVector& a, const ParamVector& b, const Mask& mask) {
    const SignTally t = tally_signs(a, b, mask);
    if (t.total() == 0) return 1.0;
    return static_cast<double>(t.agree) / static_cast<double>(t.total());
}

PerturbMode parse_perturb_mode(const std::string& s) {
    if (s == "flip_signs") return PerturbMode::flip_signs;
    if (s == "randomize_magnitude_keep_signs") return PerturbMode::randomize_magnitude_keep_signs;
    throw ConfigError("unknown perturbation mode '" + s + "' (expected flip_signs or randomize_magnitude_keep_signs)");
}

const char* perturb_mode_name(PerturbMode m) {
    return m == PerturbMode::flip_signs ? "flip_signs" : "randomize_magnitude_keep_signs";
}

ParamVector perturb_signs(const ParamVector& params, const Mask& mask, double fraction, std::uint64_t seed,
                          PerturbMode mode) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ContractError("perturb_signs: fraction outside [0, 1]");
    require_same_layout(params.layout, mask.layout(), "perturb_signs");
    std::vector<std::size_t> idx;
    for_each_weight(mask, [&](std::size_t i) { idx.push_back(i); });
    const auto k = static_cast<std::size_t>(round_half_even(fraction * static_cast<double>(idx.size())));
    Rng rng = make_rng(seed, "perturb_signs");
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));

    // Segment lookup for fan_in when redrawing magnitudes.
    std::vector<double> sd(params.size(), 0.0);
    for (const auto& seg : params.layout.segments()) {
        if (seg.prunable && seg.fan_in) {
            std::fill_n(sd.begin() + static_cast<std::ptrdiff_t>(seg.offset), seg.size,
                        std::sqrt(2.0 / static_cast<double>(seg.fan_in)));
        }
    }

    ParamVector out = params;
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t i = idx[j];
        if (mode == PerturbMode::flip_signs) {
            out.values[i] = -out.values[i];
        } else {
            const double mag = std::abs(sd[i] * standard_normal(rng));
            out.values[i] = sign_state(params.values[i]) * mag;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear mode connectivity

namespace {

// Exact at both ends, and constant when a == b.
double lerp_exact(double a, double b, double alpha) { return a == b ? a : (1.0 - alpha) * a + alpha * b; }

}  // namespace

std::vector<double> lmc_alphas(std::size_t n_points) {
    if (n_points < 3) throw ContractError("lmc_curve: need at least 3 points");
    std::vector<double> out(n_points);
    for (std::size_t i = 0; i < n_points; ++i) out[i] = static_cast<double>(i) / static_cast<double>(n_points - 1);
    return out;
}

std::vector<double> interpolate_values(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& a, const std::vector<double>& b,
                                       std::span<const double> alphas) {
    if (a.size() != b.size()) throw ContractError("interpolate_values: endpoint sizes differ");
    std::vector<double> p(a.size()), out;
    for (const double alpha : alphas) {
        for (std::size_t j = 0; j < p.size(); ++j) p[j] = lerp_exact(a[j], b[j], alpha);
        out.push_back(f(p));
    }
    return out;
}

LmcCurve lmc_curve(const Model& model, const ParamVector& a, const ParamVector& b, const Mask& mask,
                   const TrainTest& data, std::size_t n_points, std::size_t eval_batch_size) {
    require_same_layout(a.layout, b.layout, "lmc_curve");
    require_same_layout(a.layout, mask.layout(), "lmc_curve");
    LmcCurve c;
    ParamVector p = a;
    for (const double alpha : lmc_alphas(n_points)) {
        for (std::size_t j = 0; j < p.size(); ++j) p.values[j] = lerp_exact(a.values[j], b.values[j], alpha);
        const LossAcc tr = evaluate(model, p, mask, data.train, eval_batch_size);
        const LossAcc te = evaluate(model, p, mask, data.test, eval_batch_size);
        c.alphas.push_back(alpha);
        c.train_loss.push_back(tr.loss);
        c.train_acc.push_back(tr.accuracy);
        c.test_loss.push_back(te.loss);
        c.test_acc.push_back(te.accuracy);
    }
    return c;
}

double error_barrier(std::span<const double> alphas, std::span<const double> values) {
    if (alphas.size() != values.size() || alphas.size() < 2) throw ContractError("error_barrier: malformed curve");
    const double a0 = alphas.front(), a1 = alphas.back();
    const double v0 = values.front(), v1 = values.back();
    double best = 0.0;
    for (std::size_t i = 1; i + 1 < alphas.size(); ++i) {
        const double t = (alphas[i] - a0) / (a1 - a0);
        best = std::max(best, values[i] - (v0 + t * (v1 - v0)));
    }
    return best;
}

double error_barrier(const LmcCurve& curve, MetricSplit split, BarrierMetric metric) {
    if (metric == BarrierMetric::loss) {
        return error_barrier(curve.alphas, split == MetricSplit::train ? curve.train_loss : curve.test_loss);
    }
    std::vector<double> neg = split == MetricSplit::train ? curve.train_acc : curve.test_acc;
    for (double& v : neg) v = -v;
    return error_barrier(curve.alphas, neg);
}

void write_lmc_csv(const std::string& path, const LmcCurve& c) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << "alpha,train_loss,test_loss,train_acc,test_acc\n";
    char buf[160];
    for (std::size_t i = 0; i < c.alphas.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", c.alphas[i], c.train_loss[i], c.test_loss[i],
                      c.train_acc[i], c.test_acc[i]);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// Hessian power iteration

EigenEstimate power_iteration_max_eigenvalue(const GradientFn& grad, const std::vector<double>& theta,
                                             const std::vector<std::uint8_t>& keep,
                                             const PowerIterationOptions& opts) {
    const std::size_t n = theta.size();
    if (keep.size() != n) throw ContractError("power_iteration: mask size mismatch");
    if (!(opts.tol > 0.0)) throw ContractError("power_iteration: tol must be positive");

    Rng rng = make_rng(opts.seed, "power_iteration");
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = keep[i] ? standard_normal(rng) : 0.0;
    double norm = l2_norm(v);
    EigenEstimate est;
    if (norm == 0.0) {
        est.converged = true;
        return est;
    }
    for (double& x : v) x /= norm;

    const double theta_norm = l2_norm(theta);
    std::vector<double> plus(n), minus(n), hv(n);
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t it = 0; it < opts.max_iters; ++it) {
        const double eps = 1e-4 * (1.0 + theta_norm) / l2_norm(v);
        for (std::size_t i = 0; i < n; ++i) {
            plus[i] = theta[i] + eps * v[i];
            minus[i] = theta[i] - eps * v[i];
        }
        const auto gp = grad(plus);
        const auto gm = grad(minus);
        if (gp.size() != n || gm.size() != n) throw ContractError("power_iteration: gradient size mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            hv[i] = keep[i] ? (gp[i] - gm[i]) / (2.0 * eps) : 0.0;
            if (!std::isfinite(hv[i])) throw OverflowError("power_iteration: non-finite Hessian-vector product");
        }
        const double lambda = std::inner_product(v.begin(), v.end(), hv.begin(), 0.0);
        est.lambda = lambda;
        est.iterations = it + 1;
        est.history.push_back(lambda);
        if (std::abs(lambda - prev) < opts.tol) {
            est.converged = true;
            break;
        }
        prev = lambda;
        norm = l2_norm(hv);
        if (norm == 0.0) {
            est.converged = true;
            break;
        }
        for (std::size_t i = 0; i < n; ++i) v[i] = hv[i] / norm;
    }
    return est;
}

EigenEstimate hessian_max_eigenvalue(const Model& model, const ParamVector& params, const Mask& mask,
                                     const Dataset& data, const PowerIterationOptions& opts) {
    require_same_layout(params.layout, mask.layout(), "hessian_max_eigenvalue");
    if (data.size() == 0) throw ContractError("hessian_max_eigenvalue: empty dataset");
    std::vector<std::size_t> idx(std::min(opts.samples == 0 ? data.size() : opts.samples, data.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Batch batch = make_batch(data, idx);

    ParamVector probe(params.layout);
    GradientFn grad = [&](const std::vector<double>& theta) {
        probe.values = theta;
        apply_mask_inplace(probe.values, mask);
        auto vg = loss_and_grad(model, probe, batch);
        apply_mask_inplace(vg.grad.values, mask);
        return vg.grad.values;
    };
    const ParamVector masked = apply_mask(params, mask);
    return power_iteration_max_eigenvalue(grad, masked.values, mask.bits(), opts);
}

}  // namespace sculpt
