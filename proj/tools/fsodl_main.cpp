// fsodl command line: SER sweeps, single-model training, sampler diagnostics,
// gradient checks, and the analytic AWGN oracle.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <cmath>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fsodl/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int cmd_sweep(const std::string& config_path, const std::string& out_override) {
    fsodl::ExperimentConfig cfg;
    try {
        cfg = fsodl::parse_config(config_path);
        if (!out_override.empty()) cfg.output_path = out_override;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    try {
        const auto records = fsodl::run_sweep(cfg);
        fsodl::write_csv(records, cfg.output_path);
        std::cout << "wrote " << records.size() << " records to " << cfg.output_path << '\n';
        std::cout << fsodl::format_immunity_report(
            fsodl::immunity_report(records, cfg.report_es_n0_db));
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int cmd_train(const std::string& config_path, const std::string& kind_tag,
              const std::string& out_path, const std::string& regime_override,
              const std::optional<double>& esn0_override) {
    fsodl::ExperimentConfig cfg;
    fsodl::PipelineKind kind;
    fsodl::RegimeSetting regime;
    double es_n0_db = 0.0;
    try {
        cfg = fsodl::parse_config(config_path);
        kind = fsodl::pipeline_kind_from_string(kind_tag);
        if (!fsodl::kind_is_trainable(kind)) {
            std::cerr << "error: pipeline a has nothing to train\n";
            return kExitUsage;
        }
        regime = regime_override.empty() ? cfg.regimes.front()
                                         : fsodl::RegimeSetting::parse(regime_override);
        es_n0_db =
            esn0_override ? *esn0_override : cfg.train_es_n0_db.value_or(cfg.report_es_n0_db);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    try {
        fsodl::LinkConfig link;
        link.responsivity = cfg.responsivity;
        link.es_n0_db = es_n0_db;
        link.turbulence = regime.turbulence;
        fsodl::Rng rng(cfg.seed);
        fsodl::Pipeline pipeline =
            fsodl::build_pipeline(kind, cfg.modulation_order, link, rng, cfg.arch);
        fsodl::TrainConfig train_cfg = cfg.train;
        train_cfg.es_n0_db = es_n0_db;
        train_cfg.turbulence = regime.turbulence;
        train_cfg.seed = cfg.seed;
        const auto trace = pipeline.train(train_cfg, rng);
        fsodl::save_pipeline_file(pipeline, out_path);
        std::cout << "trained kind " << kind_tag << " (regime " << regime.label << ", Es/N0 "
                  << es_n0_db << " dB): loss " << trace.front() << " -> " << trace.back()
                  << " over " << trace.size() << " iterations\n"
                  << "saved model to " << out_path << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int cmd_moments(const std::string& regime_token, std::uint64_t samples, std::uint64_t seed) {
    fsodl::TurbulenceParams params;
    try {
        params = fsodl::TurbulenceParams::parse(regime_token);
        if (samples < 1000) throw std::invalid_argument("moments: need at least 1000 samples");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    try {
        fsodl::Rng rng(seed);
        double sum = 0.0, sum2 = 0.0;
        for (std::uint64_t i = 0; i < samples; ++i) {
            const double intensity = fsodl::sample_intensity(rng, params);
            sum += intensity;
            sum2 += intensity * intensity;
        }
        const double n = static_cast<double>(samples);
        const double mean = sum / n;
        const double si_emp = sum2 / n / (mean * mean) - 1.0;
        const double si_ref = fsodl::scintillation_index(params);
        std::cout << std::setprecision(10);
        std::cout << "regime=" << params.label() << " alpha=" << params.alpha
                  << " beta=" << params.beta << " samples=" << samples << '\n';
        std::cout << "mean=" << mean << " (target 1)\n";
        std::cout << "scintillation_index empirical=" << si_emp << " analytic=" << si_ref
                  << " rel_err=" << std::fabs(si_emp - si_ref) / si_ref << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int cmd_gradcheck(std::uint64_t seed, std::size_t batch, double step, double tolerance) {
    try {
        const auto results = fsodl::pipeline_gradient_checks(seed, batch, step);
        bool all_ok = true;
        std::cout << std::setprecision(6);
        for (const auto& r : results) {
            const bool ok = r.max_rel_error < tolerance;
            all_ok = all_ok && ok;
            std::cout << (ok ? "PASS" : "FAIL") << "  " << r.shape
                      << "  max_rel_error=" << r.max_rel_error << " (tolerance " << tolerance
                      << ")\n";
        }
        return all_ok ? kExitOk : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int cmd_oracle(int modulation_order, double es_n0_db) {
    try {
        const double ser = fsodl::awgn_qam_ser_analytic(modulation_order, es_n0_db);
        std::cout << std::setprecision(10) << "awgn_qam_ser m=" << modulation_order
                  << " es_n0_db=" << es_n0_db << " ser=" << ser << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fsodl: FSO link simulator over Gamma-Gamma turbulence with learned "
                 "transmitter/estimator/receiver structures.\n"
                 "Es/N0 convention: N0 is the total complex-noise variance, so "
                 "sigma^2 = Es * 10^(-EsN0_dB/10) with Es = 1 after constellation "
                 "normalization; fading is unit-mean, I = X*Y with X~Gamma(alpha,1/alpha), "
                 "Y~Gamma(beta,1/beta)."};
    app.require_subcommand(1);

    std::string sweep_config, sweep_out;
    auto* sweep = app.add_subcommand("sweep", "run the SER-vs-Es/N0 sweep from a config file");
    sweep->add_option("config", sweep_config, "experiment config file")->required();
    sweep->add_option("--out", sweep_out, "override the CSV output path");

    std::string train_config, train_kind, train_out, train_regime;
    double train_esn0 = 0.0;
    auto* train = app.add_subcommand("train", "train one pipeline and save the model");
    train->add_option("config", train_config, "experiment config file")->required();
    train->add_option("--kind", train_kind, "pipeline kind b|c|d|e|f")->required();
    train->add_option("--out", train_out, "model output path")->required();
    train->add_option("--regime", train_regime,
                      "turbulence regime (default: first regime in the config)");
    auto* esn0_opt = train->add_option("--esn0", train_esn0, "training Es/N0 in dB");

    std::string mom_regime;
    std::uint64_t mom_samples = 1'000'000;
    std::uint64_t mom_seed = 1;
    auto* moments = app.add_subcommand("moments", "Gamma-Gamma sampler moment diagnostics");
    moments->add_option("--regime", mom_regime, "weak|moderate|strong|custom:alpha,beta")
        ->required();
    moments->add_option("--samples", mom_samples, "number of draws (default 1e6)");
    moments->add_option("--seed", mom_seed, "rng seed");

    std::uint64_t gc_seed = 1;
    std::size_t gc_batch = 32;
    double gc_step = 1e-4;
    double gc_tol = 1e-4;
    auto* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of every pipeline network shape");
    gradcheck->add_option("--seed", gc_seed, "rng seed");
    gradcheck->add_option("--batch", gc_batch, "probe batch size (default 32)");
    gradcheck->add_option("--step", gc_step, "finite-difference step (default 1e-4)");
    gradcheck->add_option("--tolerance", gc_tol, "pass threshold (default 1e-4)");

    int oracle_m = 16;
    double oracle_esn0 = 0.0;
    auto* oracle = app.add_subcommand("oracle", "closed-form AWGN square-QAM SER");
    oracle->add_option("--m", oracle_m, "modulation order (default 16)");
    oracle->add_option("--esn0", oracle_esn0, "Es/N0 in dB")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (sweep->parsed()) return cmd_sweep(sweep_config, sweep_out);
    if (train->parsed())
        return cmd_train(train_config, train_kind, train_out, train_regime,
                         esn0_opt->count() ? std::optional<double>(train_esn0) : std::nullopt);
    if (moments->parsed()) return cmd_moments(mom_regime, mom_samples, mom_seed);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_batch, gc_step, gc_tol);
    if (oracle->parsed()) return cmd_oracle(oracle_m, oracle_esn0);
    return kExitUsage;
}
