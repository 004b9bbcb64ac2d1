#include "fsodl/channel.hpp"

#include <cmath>
#include <charconv>
#include <stdexcept>

namespace fsodl {

namespace {

TurbulenceParams make(double a, double b, Regime r) {
    if (!(a > 0.0) || !(b > 0.0))
        throw std::invalid_argument("TurbulenceParams: alpha and beta must be positive");
    TurbulenceParams p;
    p.alpha = a;
    p.beta = b;
    p.regime = r;
    return p;
}

double parse_double(std::string_view s) {
    double value = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end)
        throw std::invalid_argument("TurbulenceParams: bad number '" + std::string(s) + "'");
    return value;
}

} // namespace

TurbulenceParams TurbulenceParams::weak() { return make(11.6, 10.1, Regime::weak); }
TurbulenceParams TurbulenceParams::moderate() { return make(4.0, 1.9, Regime::moderate); }
TurbulenceParams TurbulenceParams::strong() { return make(4.2, 1.4, Regime::strong); }

TurbulenceParams TurbulenceParams::custom(double alpha, double beta) {
    return make(alpha, beta, Regime::custom);
}

TurbulenceParams TurbulenceParams::parse(std::string_view token) {
    if (token == "weak") return weak();
    if (token == "moderate") return moderate();
    if (token == "strong") return strong();
    constexpr std::string_view prefix = "custom:";
    if (token.substr(0, prefix.size()) == prefix) {
        const auto rest = token.substr(prefix.size());
        const auto comma = rest.find(',');
        if (comma == std::string_view::npos)
            throw std::invalid_argument("TurbulenceParams: expected custom:alpha,beta");
        return custom(parse_double(rest.substr(0, comma)), parse_double(rest.substr(comma + 1)));
    }
    throw std::invalid_argument("TurbulenceParams: unknown regime '" + std::string(token) + "'");
}

std::string TurbulenceParams::label() const {
    switch (regime) {
        case Regime::weak: return "weak";
        case Regime::moderate: return "moderate";
        case Regime::strong: return "strong";
        case Regime::custom: break;
    }
    return "custom";
}

double LinkConfig::noise_variance() const {
    return noise_variance_for_snr(es_n0_db, es);
}

double scintillation_index(const TurbulenceParams& params) {
    if (!(params.alpha > 0.0) || !(params.beta > 0.0))
        throw std::invalid_argument("scintillation_index: invalid parameters");
    return 1.0 / params.alpha + 1.0 / params.beta + 1.0 / (params.alpha * params.beta);
}

double sample_intensity(Rng& rng, const TurbulenceParams& params) {
    const double x = sample_gamma(rng, params.alpha, 1.0 / params.alpha);
    const double y = sample_gamma(rng, params.beta, 1.0 / params.beta);
    return x * y;
}

double noise_variance_for_snr(double es_n0_db, double es) {
    if (!(es > 0.0)) throw std::invalid_argument("noise_variance_for_snr: es must be positive");
    if (!std::isfinite(es_n0_db))
        throw std::invalid_argument("noise_variance_for_snr: es_n0_db must be finite");
    return es * std::pow(10.0, -es_n0_db / 10.0);
}

Complex apply_link(Complex x, double intensity, const LinkConfig& cfg, Rng& rng) {
    if (!(intensity > 0.0) || !std::isfinite(intensity))
        throw std::invalid_argument("apply_link: intensity must be positive and finite");
    const Complex n = sample_gaussian_pair(rng, cfg.noise_variance());
    return cfg.responsivity * intensity * x + n;
}

} // namespace fsodl
