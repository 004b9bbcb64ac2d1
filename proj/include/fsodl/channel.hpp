#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "fsodl/rng.hpp"

namespace fsodl {

enum class Regime { weak, moderate, strong, custom };

/// Gamma-Gamma shape pair (alpha, beta) naming a turbulence regime.
struct TurbulenceParams {
    double alpha = 0.0;
    double beta = 0.0;
    Regime regime = Regime::custom;

    static TurbulenceParams weak();     // (11.6, 10.1)
    static TurbulenceParams moderate(); // (4.0, 1.9)
    static TurbulenceParams strong();   // (4.2, 1.4)
    static TurbulenceParams custom(double alpha, double beta);

    /// Parses "weak" | "moderate" | "strong" | "custom:alpha,beta".
    static TurbulenceParams parse(std::string_view token);

    std::string label() const;
};

/// Link settings: photodetector responsivity, operating Es/N0, average symbol
/// energy, and the fading setting (nullopt = intensity fixed at 1).
struct LinkConfig {
    double responsivity = 1.0;
    double es_n0_db = 0.0;
    double es = 1.0;
    std::optional<TurbulenceParams> turbulence{};

    double noise_variance() const;
};

/// Normalized intensity variance 1/alpha + 1/beta + 1/(alpha*beta) of the
/// unit-mean product-of-gammas fading below.
double scintillation_index(const TurbulenceParams& params);

/// One fading draw I = X*Y with X ~ Gamma(alpha, 1/alpha) and
/// Y ~ Gamma(beta, 1/beta) independent, so E[I] = 1. Fresh per symbol.
double sample_intensity(Rng& rng, const TurbulenceParams& params);

/// Total complex-noise variance N0 = es * 10^(-es_n0_db / 10).
double noise_variance_for_snr(double es_n0_db, double es);

/// The link: y = R * I * x + n, with n circularly symmetric gaussian of total
/// variance cfg.noise_variance().
Complex apply_link(Complex x, double intensity, const LinkConfig& cfg, Rng& rng);

} // namespace fsodl
