#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sculpt {

using Rng = std::mt19937_64;

// Named seed derivation: every subsystem draws from derive_seed(run_seed, "purpose")
// so that adding a consumer never perturbs the streams of the others.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed, std::string_view purpose) {
    return Rng(derive_seed(seed, purpose));
}

// Uniform in the open interval (0, 1).
double uniform_open01(Rng& rng);

// Standard normal via Box-Muller on uniform_open01, so streams are identical
// across standard library implementations.
double standard_normal(Rng& rng);

}  // namespace sculpt
