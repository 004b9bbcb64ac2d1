#include "fsodl/modem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fsodl {

namespace {

// binary index of a Gray codeword (inverse of g = n ^ (n >> 1))
unsigned gray_to_binary(unsigned g) {
    unsigned n = g;
    for (unsigned shift = 1; shift < 16; shift <<= 1) n ^= n >> shift;
    return n;
}

} // namespace

double Constellation::mean_energy() const {
    double sum = 0.0;
    for (const auto& p : points) sum += std::norm(p);
    return points.empty() ? 0.0 : sum / static_cast<double>(points.size());
}

Constellation gray_qam_constellation(int order) {
    if (order != 4 && order != 16 && order != 64)
        throw std::invalid_argument("gray_qam_constellation: order must be 4, 16 or 64");
    int bits_per_axis = 0;
    while ((1 << (2 * (bits_per_axis + 1))) <= order) ++bits_per_axis;
    const int side = 1 << bits_per_axis;
    // mean energy of the raw {+-1, +-3, ...} grid is 2 (side^2 - 1) / 3
    const double normalizer = std::sqrt(2.0 * (side * side - 1) / 3.0);

    Constellation c;
    c.source = Constellation::Source::gray_qam;
    c.points.resize(order);
    for (int k = 0; k < order; ++k) {
        const unsigned gi = static_cast<unsigned>(k) >> bits_per_axis;
        const unsigned gq = static_cast<unsigned>(k) & (side - 1);
        const double ai = 2.0 * gray_to_binary(gi) - (side - 1);
        const double aq = 2.0 * gray_to_binary(gq) - (side - 1);
        c.points[k] = Complex{ai / normalizer, aq / normalizer};
    }
    return c;
}

std::vector<double> one_hot(int k, int order) {
    if (k < 0 || k >= order) throw std::out_of_range("one_hot: symbol index out of range");
    std::vector<double> v(order, 0.0);
    v[k] = 1.0;
    return v;
}

int ml_detect(Complex y, Complex channel_gain, double responsivity, const Constellation& c) {
    if (std::norm(channel_gain) == 0.0)
        throw std::domain_error("ml_detect: zero channel gain");
    const Complex g = responsivity * channel_gain;
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int u = 0; u < c.order(); ++u) {
        const double d = std::norm(y - g * c.points[u]);
        if (d < best_dist) {
            best_dist = d;
            best = u;
        }
    }
    return best;
}

int naive_detect(Complex y, double responsivity, const Constellation& c) {
    return ml_detect(y, Complex{1.0, 0.0}, responsivity, c);
}

std::vector<double> soft_detect(Complex y_eq, const Constellation& c, double temperature) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("soft_detect: temperature must be positive");
    const int m = c.order();
    std::vector<double> logits(m);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int u = 0; u < m; ++u) {
        logits[u] = -std::norm(y_eq - c.points[u]) / temperature;
        max_logit = std::max(max_logit, logits[u]);
    }
    double sum = 0.0;
    for (int u = 0; u < m; ++u) {
        logits[u] = std::exp(logits[u] - max_logit);
        sum += logits[u];
    }
    for (int u = 0; u < m; ++u) logits[u] /= sum;
    return logits;
}

} // namespace fsodl
