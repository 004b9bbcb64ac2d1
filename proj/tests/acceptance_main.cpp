// Acceptance suite: one pass/fail line per criterion, exit 0 only if all pass.
//
//  1 gamma-gamma sampler moments per regime
//  2 AWGN oracle equivalence for pipeline a with fading disabled
//  3 gradient integrity for every pipeline network shape
//  4 perfect-CSI parity: trained kind b vs kind a
//  5 estimator utility: trained kinds d and e vs the naive baseline
//  6 physical orderings of kind a SER across Es/N0 and regimes
//  7 byte-identical sweep determinism
//  8 training sanity: every trainable kind halves its initial loss
//  9 regime-immunity report: SER(e)/SER(b) finite in every regime

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fsodl/harness.hpp"

using namespace fsodl;

namespace {

constexpr std::uint64_t kMasterSeed = 20240801;

TrainConfig desk_scale(double es_n0_db, std::optional<TurbulenceParams> turbulence) {
    TrainConfig cfg;
    cfg.batch_size = 4096;
    cfg.dataset_batches = 4;
    cfg.iterations = 300;
    cfg.optimizer = OptimizerState::Kind::adam;
    cfg.learning_rate = 0.005;
    cfg.es_n0_db = es_n0_db;
    cfg.turbulence = std::move(turbulence);
    return cfg;
}

Pipeline trained_pipeline(PipelineKind kind, double es_n0_db,
                          const std::optional<TurbulenceParams>& turbulence, std::uint64_t seed,
                          std::vector<double>* trace_out = nullptr) {
    LinkConfig link;
    link.es_n0_db = es_n0_db;
    link.turbulence = turbulence;
    Rng rng(seed);
    Pipeline p = build_pipeline(kind, 16, link, rng);
    if (kind_is_trainable(kind)) {
        const auto trace = p.train(desk_scale(es_n0_db, turbulence), rng);
        if (trace_out) *trace_out = trace;
    }
    return p;
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

using Result = std::pair<bool, std::string>;

Result criterion_gamma_moments() {
    bool ok = true;
    std::ostringstream detail;
    const struct {
        const char* name;
        TurbulenceParams params;
        double si_ref;
    } regimes[] = {
        {"strong", TurbulenceParams::strong(), 1.1224489795918367},
        {"moderate", TurbulenceParams::moderate(), 0.9078947368421053},
        {"weak", TurbulenceParams::weak(), 0.19375213383429226},
    };
    const int n = 1000000;
    int idx = 0;
    for (const auto& regime : regimes) {
        Rng rng = Rng::substream(kMasterSeed, 100 + idx++);
        double sum = 0.0, sum2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = sample_intensity(rng, regime.params);
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / n;
        const double si = sum2 / n / (mean * mean) - 1.0;
        const double closed = scintillation_index(regime.params);
        const bool mean_ok = std::fabs(mean - 1.0) < 0.005;
        const bool si_ok = std::fabs(si - regime.si_ref) < 0.02 * regime.si_ref;
        const bool form_ok = std::fabs(closed - regime.si_ref) < 1e-12;
        ok = ok && mean_ok && si_ok && form_ok;
        detail << fmt("%s: mean=%.4f si=%.4f (ref %.4f); ", regime.name, mean, si, regime.si_ref);
    }
    return {ok, detail.str()};
}

Result criterion_awgn_oracle() {
    LinkConfig link;
    Rng build_rng = Rng::substream(kMasterSeed, 200);
    const Pipeline a = build_pipeline(PipelineKind::a_qam_perfect_ml, 16, link, build_rng);
    bool ok = true;
    std::ostringstream detail;
    int idx = 0;
    for (double db : {6.0, 10.0, 14.0}) {
        Rng rng = Rng::substream(kMasterSeed, 210 + idx++);
        const SerRecord rec = measure_ser(a, std::nullopt, db, rng, StopRule{600000, 2000});
        const double ref = awgn_qam_ser_analytic(16, db);
        const double gap = std::fabs(rec.ser - ref);
        const bool point_ok = rec.errors >= 300 && gap < 3.0 * rec.standard_error;
        ok = ok && point_ok;
        detail << fmt("%gdB: ser=%.5f ref=%.5f gap=%.1fse n_err=%llu; ", db, rec.ser, ref,
                      gap / rec.standard_error, (unsigned long long)rec.errors);
    }
    return {ok, detail.str()};
}

Result criterion_gradient_integrity() {
    const auto results = pipeline_gradient_checks(kMasterSeed, 32, 1e-4);
    bool ok = true;
    std::ostringstream detail;
    for (const auto& r : results) {
        ok = ok && r.max_rel_error < 1e-4;
        detail << fmt("%s: %.2e; ", r.shape.c_str(), r.max_rel_error);
    }
    return {ok, detail.str() + "(tolerance 1e-4)"};
}

Result criterion_perfect_csi_parity() {
    const auto moderate = TurbulenceParams::moderate();
    const Pipeline b =
        trained_pipeline(PipelineKind::b_qam_perfect_dnn, 14.0, moderate, mix_seed(kMasterSeed, 40));
    const Pipeline a =
        trained_pipeline(PipelineKind::a_qam_perfect_ml, 14.0, moderate, mix_seed(kMasterSeed, 41));
    const StopRule stop{300000, 1500};
    Rng ma = Rng::substream(kMasterSeed, 410);
    Rng mb = Rng::substream(kMasterSeed, 411);
    const SerRecord ra = measure_ser(a, moderate, 14.0, ma, stop);
    const SerRecord rb = measure_ser(b, moderate, 14.0, mb, stop);
    const double ratio = rb.ser / ra.ser;
    const bool ok = rb.ser <= 1.3 * ra.ser;
    return {ok, fmt("moderate 14dB: ser_a=%.5f ser_b=%.5f ratio=%.3f (limit 1.3)", ra.ser, rb.ser,
                    ratio)};
}

Result criterion_estimator_utility() {
    const auto strong = TurbulenceParams::strong();
    LinkConfig link;
    link.es_n0_db = 20.0;
    const StopRule stop{300000, 1500};
    Rng mn = Rng::substream(kMasterSeed, 510);
    const SerRecord rn = measure_naive_ser(16, link, strong, 20.0, mn, stop);

    const Pipeline d =
        trained_pipeline(PipelineKind::d_qam_dnnest_ml, 20.0, strong, mix_seed(kMasterSeed, 50));
    const Pipeline e =
        trained_pipeline(PipelineKind::e_qam_dnnest_dnn, 20.0, strong, mix_seed(kMasterSeed, 51));
    Rng md = Rng::substream(kMasterSeed, 511);
    Rng me = Rng::substream(kMasterSeed, 512);
    const SerRecord rd = measure_ser(d, strong, 20.0, md, stop);
    const SerRecord re = measure_ser(e, strong, 20.0, me, stop);

    const bool enough =
        rn.errors >= 200 && rd.errors >= 200 && re.errors >= 200;
    const bool ok = enough && rd.ser < rn.ser && re.ser < rn.ser;
    return {ok, fmt("strong 20dB: naive=%.5f d=%.5f e=%.5f (errors %llu/%llu/%llu)", rn.ser, rd.ser,
                    re.ser, (unsigned long long)rn.errors, (unsigned long long)rd.errors,
                    (unsigned long long)re.errors)};
}

Result criterion_physical_orderings() {
    ExperimentConfig cfg;
    cfg.kinds = {"a"};
    cfg.es_n0_start_db = 0.0;
    cfg.es_n0_stop_db = 30.0;
    cfg.es_n0_step_db = 2.0;
    cfg.max_symbols = 300000;
    cfg.target_errors = 400;
    cfg.seed = mix_seed(kMasterSeed, 60);
    const auto records = run_sweep(cfg);
    const std::size_t points = cfg.grid().size();
    auto pooled = [](const SerRecord& x, const SerRecord& y) {
        return std::sqrt(x.standard_error * x.standard_error +
                         y.standard_error * y.standard_error);
    };
    bool monotone = true, severity = true;
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t i = 0; i + 1 < points; ++i) {
            const auto& hi = records[points * r + i];
            const auto& lo = records[points * r + i + 1];
            monotone = monotone && lo.ser <= hi.ser + 3.0 * pooled(hi, lo);
        }
    for (std::size_t i = 0; i < points; ++i) {
        const auto& weak = records[i];
        const auto& moderate = records[points + i];
        const auto& strong = records[2 * points + i];
        severity = severity && weak.ser <= moderate.ser + 3.0 * pooled(weak, moderate) &&
                   moderate.ser <= strong.ser + 3.0 * pooled(moderate, strong);
    }
    return {monotone && severity,
            fmt("%zu grid points x 3 regimes: monotone=%s severity-ordered=%s (3 pooled se)",
                points, monotone ? "yes" : "no", severity ? "yes" : "no")};
}

Result criterion_determinism() {
    ExperimentConfig cfg;
    cfg.kinds = {"a", "b", "naive"};
    cfg.regimes = {RegimeSetting::parse("strong")};
    cfg.es_n0_start_db = 12.0;
    cfg.es_n0_stop_db = 16.0;
    cfg.es_n0_step_db = 4.0;
    cfg.max_symbols = 50000;
    cfg.target_errors = 200;
    cfg.seed = 77;
    cfg.train.batch_size = 1024;
    cfg.train.dataset_batches = 2;
    cfg.train.iterations = 120;

    const auto tmp = std::filesystem::temp_directory_path();
    const auto p1 = (tmp / "fsodl_acceptance_run1.csv").string();
    const auto p2 = (tmp / "fsodl_acceptance_run2.csv").string();
    write_csv(run_sweep(cfg), p1);
    write_csv(run_sweep(cfg), p2);
    auto slurp = [](const std::string& path) {
        std::ifstream in(path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    const std::string run1 = slurp(p1), run2 = slurp(p2);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
    const bool ok = !run1.empty() && run1 == run2;
    return {ok, fmt("two sweeps (kinds a,b,naive; 2 points; trained): %zu bytes, %s", run1.size(),
                    ok ? "byte-identical" : "MISMATCH")};
}

Result criterion_training_sanity() {
    const auto moderate = TurbulenceParams::moderate();
    bool ok = true;
    std::ostringstream detail;
    int idx = 0;
    for (auto kind : {PipelineKind::b_qam_perfect_dnn, PipelineKind::c_shaper_perfect_dnn,
                      PipelineKind::d_qam_dnnest_ml, PipelineKind::e_qam_dnnest_dnn,
                      PipelineKind::f_shaper_dnnest_dnn}) {
        std::vector<double> trace;
        trained_pipeline(kind, 14.0, moderate, mix_seed(kMasterSeed, 80 + idx++), &trace);
        bool finite = true;
        for (double v : trace) finite = finite && std::isfinite(v) && v >= 0.0;
        const bool halved = trace.back() <= 0.5 * trace.front();
        ok = ok && finite && halved;
        detail << fmt("%s: %.3f->%.3f%s; ", to_string(kind).c_str(), trace.front(), trace.back(),
                      finite ? "" : " NON-FINITE");
    }
    return {ok, detail.str() + "(must reach half the initial loss)"};
}

Result criterion_regime_immunity() {
    // the same path the sweep command runs: trained kinds b and e per regime
    // at one grid point, then the report over the emitted records
    ExperimentConfig cfg;
    cfg.kinds = {"b", "e"};
    cfg.es_n0_start_db = 14.0;
    cfg.es_n0_stop_db = 14.0;
    cfg.es_n0_step_db = 2.0;
    cfg.max_symbols = 300000;
    cfg.target_errors = 800;
    cfg.seed = mix_seed(kMasterSeed, 90);
    cfg.train = desk_scale(14.0, std::nullopt); // regime/Es/N0 filled per point
    cfg.report_es_n0_db = 14.0;
    const auto records = run_sweep(cfg);
    const auto rows = immunity_report(records, cfg.report_es_n0_db);
    bool ok = rows.size() == 3;
    std::ostringstream detail;
    for (const auto& row : rows) {
        ok = ok && std::isfinite(row.ratio);
        detail << fmt("%s: e/b=%.3f (b=%.4f e=%.4f); ", row.regime_label.c_str(), row.ratio,
                      row.ser_b, row.ser_e);
    }
    return {ok, detail.str() + "(reported, finiteness required)"};
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Result()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "gamma-gamma-moments", criterion_gamma_moments},
        {2, "awgn-oracle-equivalence", criterion_awgn_oracle},
        {3, "gradient-integrity", criterion_gradient_integrity},
        {4, "perfect-csi-parity", criterion_perfect_csi_parity},
        {5, "estimator-utility", criterion_estimator_utility},
        {6, "physical-orderings", criterion_physical_orderings},
        {7, "sweep-determinism", criterion_determinism},
        {8, "training-sanity", criterion_training_sanity},
        {9, "regime-immunity-report", criterion_regime_immunity},
    };

    int passed = 0;
    for (const auto& criterion : criteria) {
        bool ok = false;
        std::string detail;
        try {
            const auto result = criterion.run();
            ok = result.first;
            detail = result.second;
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        passed += ok;
        std::printf("%s  %d %-26s %s\n", ok ? "PASS" : "FAIL", criterion.id, criterion.name,
                    detail.c_str());
        std::fflush(stdout);
    }
    std::printf("SUMMARY %d/%zu criteria passed\n", passed, criteria.size());
    return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
