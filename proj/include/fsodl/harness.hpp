#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fsodl/pipeline.hpp"

namespace fsodl {

/// First of the two bounds wins: stop once target_errors symbol errors are
/// seen, or after max_symbols transmissions.
struct StopRule {
    std::uint64_t max_symbols = 1'000'000;
    std::uint64_t target_errors = 400;
};

/// One Monte Carlo measurement point.
struct SerRecord {
    std::string pipeline_tag;
    std::string regime_label;
    double es_n0_db = 0.0;
    double ser = 0.0;
    double standard_error = 0.0;
    std::uint64_t symbols = 0;
    std::uint64_t errors = 0;
    std::uint64_t seed = 0;
};

/// A fading setting by name: "weak" | "moderate" | "strong" | "none"
/// (fading disabled, I == 1) | "custom:alpha,beta".
struct RegimeSetting {
    std::string label;
    std::optional<TurbulenceParams> turbulence;

    static RegimeSetting parse(std::string_view token);
};

/// Monte Carlo SER of a trained pipeline at one operating point. The
/// pipeline's link supplies responsivity and symbol energy; regime and
/// Es/N0 come from the arguments.
SerRecord measure_ser(const Pipeline& pipeline, const std::optional<TurbulenceParams>& turbulence,
                      double es_n0_db, Rng& rng, const StopRule& stop);

/// Same loop for the fixed-gain baseline: QAM transmit, naive_detect receive.
SerRecord measure_naive_ser(int modulation_order, const LinkConfig& link_base,
                            const std::optional<TurbulenceParams>& turbulence, double es_n0_db,
                            Rng& rng, const StopRule& stop);

/// Closed-form SER of square M-QAM over AWGN at the Es/N0 convention used by
/// the link: 1 - (1 - p)^2 with p = 2 (1 - 1/sqrt(M)) Q(sqrt(3 g / (M - 1))).
double awgn_qam_ser_analytic(int modulation_order, double es_n0_db);

/// Full experiment description; defaults are the tuned reference values.
struct ExperimentConfig {
    std::vector<std::string> kinds = {"a", "b", "c", "d", "e", "f", "naive"};
    int modulation_order = 16;
    std::vector<RegimeSetting> regimes;
    double es_n0_start_db = 0.0;
    double es_n0_stop_db = 30.0;
    double es_n0_step_db = 2.0;
    std::uint64_t max_symbols = 1'000'000;
    std::uint64_t target_errors = 400;
    std::uint64_t seed = 1;
    std::string output_path = "results.csv";
    double responsivity = 1.0;
    TrainConfig train;
    /// Set: every trainable kind is trained once per regime at this Es/N0.
    /// Unset: retrained at every grid point, at that point's Es/N0.
    std::optional<double> train_es_n0_db;
    NetArch arch;
    double report_es_n0_db = 14.0;

    ExperimentConfig();
    std::vector<double> grid() const;
    void validate() const;
};

/// Runs every (kind, regime, Es/N0) triple in grid order: build, train
/// (kinds b-f), measure. Fully determined by the config seed. A failing
/// point aborts with a diagnostic naming the triple.
std::vector<SerRecord> run_sweep(const ExperimentConfig& cfg);

/// Header `pipeline,regime,es_n0_db,ser,std_err,symbols,errors,seed`, one row
/// per record, floats at 17 significant digits, deterministic order.
void write_csv(const std::vector<SerRecord>& records, const std::string& path);
std::vector<SerRecord> read_csv(const std::string& path);

/// Per-regime SER(kind e) / SER(kind b) at the grid point closest to
/// es_n0_db; one row per regime that has both measurements.
struct ImmunityRow {
    std::string regime_label;
    double es_n0_db = 0.0;
    double ser_b = 0.0;
    double ser_e = 0.0;
    double ratio = 0.0;
};
std::vector<ImmunityRow> immunity_report(const std::vector<SerRecord>& records, double es_n0_db);
std::string format_immunity_report(const std::vector<ImmunityRow>& rows);

/// Flat `key = value` config file with `#` comments; missing keys take the
/// defaults above, unknown keys are an error.
ExperimentConfig parse_config(const std::string& path);

/// Central-difference validation of every network shape the pipelines use
/// (detector 2->16, shaper 16->2, estimator 2->2, each 4x40 relu).
struct GradCheckResult {
    std::string shape;
    double max_rel_error = 0.0;
};
std::vector<GradCheckResult> pipeline_gradient_checks(std::uint64_t seed, std::size_t batch,
                                                      double step);

} // namespace fsodl
