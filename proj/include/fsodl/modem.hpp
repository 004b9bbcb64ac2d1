#pragma once

#include <vector>

#include "fsodl/rng.hpp"

namespace fsodl {

/// Ordered list of M constellation points with unit average energy.
struct Constellation {
    enum class Source { gray_qam, learned };

    std::vector<Complex> points;
    Source source = Source::gray_qam;

    int order() const { return static_cast<int>(points.size()); }
    double mean_energy() const;
};

/// Square M-QAM (M in {4, 16, 64}): per-axis levels {+-1, +-3, ...} scaled to
/// unit average energy, Gray-coded index layout (adjacent levels differ in
/// one index bit per axis).
Constellation gray_qam_constellation(int order);

/// Length-M indicator of symbol k. Throws std::out_of_range on bad k.
std::vector<double> one_hot(int k, int order);

/// Maximum-likelihood detection with channel knowledge: the index u
/// minimizing |y - R * gain * point_u|^2, ties broken by lowest index.
/// Throws std::domain_error on zero channel gain.
int ml_detect(Complex y, Complex channel_gain, double responsivity, const Constellation& c);

/// Fixed-gain baseline: ml_detect with the channel gain pinned at 1.
int naive_detect(Complex y, double responsivity, const Constellation& c);

/// Differentiable surrogate detector: softmax over -|y_eq - point_u|^2 / temperature.
/// Entries positive, summing to 1.
std::vector<double> soft_detect(Complex y_eq, const Constellation& c, double temperature);

} // namespace fsodl
