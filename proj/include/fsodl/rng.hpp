#pragma once

#include <array>
#include <complex>
#include <cstdint>

namespace fsodl {

/// Complex baseband sample carried as two doubles (re, im).
using Complex = std::complex<double>;

/// Deterministic seedable generator: xoshiro256++ (Blackman/Vigna) with the
/// state filled by SplitMix64, so a 64-bit seed pins the whole stream.
/// Single-owner mutable; parallel work derives independent substreams via
/// substream(seed, index) instead of sharing one stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Stream number `index` of the family rooted at `seed`. Distinct
    /// indices give distinct, reproducible streams.
    static Rng substream(std::uint64_t seed, std::uint64_t index);

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01();

    /// Uniform in (0, 1): never exactly zero.
    double uniform_open01();

    /// Uniform in [-1, 1).
    double uniform_pm1();

    /// Uniform integer in [0, n), unbiased (rejection on the top range).
    std::uint64_t uniform_below(std::uint64_t n);

    /// One standard normal draw (polar method, one of the pair discarded).
    double gaussian();

    std::uint64_t seed() const { return seed_; }

private:
    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_ = 0;
};

/// SplitMix64-based seed mixer behind Rng::substream; exposed so callers can
/// chain it to derive per-job seeds, e.g. mix_seed(mix_seed(s, job), phase).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

/// One draw from Gamma(shape, scale): mean shape*scale, variance
/// shape*scale^2, strictly positive. Marsaglia-Tsang squeeze for shape >= 1,
/// power boost Gamma(shape+1)*U^(1/shape) below 1.
/// Throws std::invalid_argument unless shape > 0 and scale > 0.
double sample_gamma(Rng& rng, double shape, double scale);

/// Circularly symmetric complex gaussian: each component zero-mean with
/// variance total_variance / 2, independent. total_variance = 0 gives (0, 0).
/// Throws std::invalid_argument on negative variance.
Complex sample_gaussian_pair(Rng& rng, double total_variance);

} // namespace fsodl
