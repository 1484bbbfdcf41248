#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sculpt/data.hpp"
#include "sculpt/mask.hpp"
#include "sculpt/model.hpp"
#include "sculpt/params.hpp"

namespace sculpt {

// Sign bookkeeping runs over unmasked prunable coordinates (the weights). Zero is a
// third sign state: a coordinate that is zero on exactly one side is neither a
// flip nor an agreement.
struct SignTally {
    std::size_t agree = 0;
    std::size_t flips = 0;
    std::size_t zero_mismatch = 0;
    std::size_t total() const { return agree + flips + zero_mismatch; }
};

SignTally tally_signs(const ParamVector& reference, const ParamVector& current, const Mask& mask);
std::size_t count_sign_flips(const ParamVector& reference, const ParamVector& current, const Mask& mask);
double sign_overlap(const ParamVector& a, const ParamVector& b, const Mask& mask);

enum class PerturbMode { flip_signs, randomize_magnitude_keep_signs };

PerturbMode parse_perturb_mode(const std::string& s);
const char* perturb_mode_name(PerturbMode m);

// Acts on round(fraction · n) uniformly chosen unmasked prunable coordinates.
// flip_signs negates them; randomize_magnitude_keep_signs replaces each magnitude
// with |N(0, 2/fan_in)| and keeps the original sign (zeros stay zero).
ParamVector perturb_signs(const ParamVector& params, const Mask& mask, double fraction, std::uint64_t seed,
                          PerturbMode mode);

enum class MetricSplit { train, test };
enum class BarrierMetric { loss, accuracy };

struct LmcCurve {
    std::vector<double> alphas;
    std::vector<double> train_loss, test_loss, train_acc, test_acc;
    std::string endpoint_a, endpoint_b;
};

// Uniform grid i/(n−1), i = 0..n−1; requires n >= 3.
std::vector<double> lmc_alphas(std::size_t n_points);

// f((1−α)·a + α·b) for every α: the interpolation used by lmc_curve, for arbitrary
// scalar functions of a flat parameter vector.
std::vector<double> interpolate_values(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& a, const std::vector<double>& b,
                                       std::span<const double> alphas);

// θ(α) = (1−α)·θ_a + α·θ_b on a uniform grid of n_points α values in [0, 1].
LmcCurve lmc_curve(const Model& model, const ParamVector& a, const ParamVector& b, const Mask& mask,
                   const TrainTest& data, std::size_t n_points = 21, std::size_t eval_batch_size = 500);

// Largest excess of the curve over its chord at interior α, clamped at 0. For the
// accuracy metric the excess is measured downward (chord minus accuracy).
double error_barrier(const LmcCurve& curve, MetricSplit split, BarrierMetric metric = BarrierMetric::loss);
double error_barrier(std::span<const double> alphas, std::span<const double> values);

void write_lmc_csv(const std::string& path, const LmcCurve& curve);

struct PowerIterationOptions {
    std::size_t max_iters = 200;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    std::size_t samples = 256;  // training subset used for the loss Hessian
};

struct EigenEstimate {
    double lambda = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    std::vector<double> history;  // Rayleigh quotient per iteration
};

using GradientFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Power iteration on the Hessian of the function whose gradient is `grad`, using
// Hv ≈ (∇L(θ+εv) − ∇L(θ−εv)) / 2ε with ε = 1e-4·(1+‖θ‖)/‖v‖. Coordinates with a
// zero `keep` bit are projected out every iteration. Returns the Rayleigh quotient.
EigenEstimate power_iteration_max_eigenvalue(const GradientFn& grad, const std::vector<double>& theta,
                                             const std::vector<std::uint8_t>& keep,
                                             const PowerIterationOptions& opts);

// Masked loss Hessian on the first opts.samples training samples.
EigenEstimate hessian_max_eigenvalue(const Model& model, const ParamVector& params, const Mask& mask,
                                     const Dataset& data, const PowerIterationOptions& opts);

}  // namespace sculpt
