#pragma once

#include <cstdint>

namespace cardiomix {

/// Seeded pseudo-random generator used everywhere in the pipeline.
///
/// Algorithm: SplitMix64 (Steele, Lea & Flood's 64-bit mixer; public
/// domain). State advances by the golden-ratio constant and each output
/// is the finalizer of the new state, so the sequence for a given seed
/// is fully specified and reproducible across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();

    /// Uniform in [0,1) with 53 significant bits.
    double uniform01();

    /// Uniform in [lo,hi).
    double uniform(double lo, double hi);

    /// Unbiased integer in [0,n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller (two uniforms per draw).
    double normal();

private:
    std::uint64_t state_;
};

/// SplitMix64 finalizer as a standalone 64-bit mixing function.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent child seed from (seed, stream). Used to fan a
/// single experiment seed out to per-stage / per-item streams so work can
/// be split or rerun without changing results.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

/// Gamma(alpha, 1) via Marsaglia-Tsang squeeze; alpha < 1 is boosted
/// through Gamma(alpha+1) * U^(1/alpha).
double sample_gamma(double alpha, SplitMix64& rng);

/// Beta(a, b) as X/(X+Y) with X~Gamma(a), Y~Gamma(b).
double sample_beta(double a, double b, SplitMix64& rng);

}  // namespace cardiomix
