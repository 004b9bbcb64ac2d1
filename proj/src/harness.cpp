#include "fsodl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fsodl {

RegimeSetting RegimeSetting::parse(std::string_view token) {
    RegimeSetting r;
    if (token == "none") {
        r.label = "none";
        return r;
    }
    r.turbulence = TurbulenceParams::parse(token);
    r.label = r.turbulence->regime == Regime::custom ? std::string(token)
                                                     : r.turbulence->label();
    return r;
}

namespace {

std::uint64_t job_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> indices) {
    for (const auto index : indices) seed = mix_seed(seed, index);
    return seed;
}

template <typename TxFn, typename RxFn>
SerRecord measure_loop(TxFn&& tx, RxFn&& rx, const LinkConfig& link,
                       const std::optional<TurbulenceParams>& turbulence, int modulation_order,
                       Rng& rng, const StopRule& stop) {
    if (stop.max_symbols == 0) throw std::invalid_argument("measure: max_symbols must be >= 1");
    std::uint64_t symbols = 0;
    std::uint64_t errors = 0;
    while (symbols < stop.max_symbols && errors < stop.target_errors) {
        const int k = static_cast<int>(rng.uniform_below(modulation_order));
        const double intensity = turbulence ? sample_intensity(rng, *turbulence) : 1.0;
        const Complex y = apply_link(tx(k), intensity, link, rng);
        ++symbols;
        if (rx(y, intensity) != k) ++errors;
    }
    SerRecord rec;
    rec.es_n0_db = link.es_n0_db;
    rec.symbols = symbols;
    rec.errors = errors;
    rec.ser = static_cast<double>(errors) / static_cast<double>(symbols);
    rec.standard_error = std::sqrt(rec.ser * (1.0 - rec.ser) / static_cast<double>(symbols));
    rec.seed = rng.seed();
    return rec;
}

} // namespace

SerRecord measure_ser(const Pipeline& pipeline, const std::optional<TurbulenceParams>& turbulence,
                      double es_n0_db, Rng& rng, const StopRule& stop) {
    if (!pipeline.trained) throw std::logic_error("measure_ser: pipeline is not trained");
    LinkConfig link = pipeline.link;
    link.es_n0_db = es_n0_db;
    link.turbulence = turbulence;
    SerRecord rec = measure_loop([&](int k) { return pipeline.transmit(k); },
                                 [&](Complex y, double i) { return pipeline.receive(y, i); }, link,
                                 turbulence, pipeline.modulation_order, rng, stop);
    rec.pipeline_tag = to_string(pipeline.kind);
    rec.regime_label = turbulence ? turbulence->label() : "none";
    return rec;
}

SerRecord measure_naive_ser(int modulation_order, const LinkConfig& link_base,
                            const std::optional<TurbulenceParams>& turbulence, double es_n0_db,
                            Rng& rng, const StopRule& stop) {
    const Constellation qam = gray_qam_constellation(modulation_order);
    LinkConfig link = link_base;
    link.es_n0_db = es_n0_db;
    link.turbulence = turbulence;
    SerRecord rec = measure_loop(
        [&](int k) { return qam.points[k]; },
        [&](Complex y, double) { return naive_detect(y, link.responsivity, qam); }, link,
        turbulence, modulation_order, rng, stop);
    rec.pipeline_tag = "naive";
    rec.regime_label = turbulence ? turbulence->label() : "none";
    return rec;
}

double awgn_qam_ser_analytic(int modulation_order, double es_n0_db) {
    const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(modulation_order))));
    if (modulation_order < 4 || root * root != modulation_order)
        throw std::invalid_argument("awgn_qam_ser_analytic: square M-QAM required");
    const double gamma = std::pow(10.0, es_n0_db / 10.0);
    const double arg = std::sqrt(3.0 * gamma / (modulation_order - 1));
    const double q = 0.5 * std::erfc(arg / std::sqrt(2.0));
    const double p = 2.0 * (1.0 - 1.0 / root) * q;
    return 1.0 - (1.0 - p) * (1.0 - p);
}

ExperimentConfig::ExperimentConfig() {
    regimes = {RegimeSetting::parse("weak"), RegimeSetting::parse("moderate"),
               RegimeSetting::parse("strong")};
}

std::vector<double> ExperimentConfig::grid() const {
    std::vector<double> points;
    if (!(es_n0_step_db > 0.0)) return points;
    for (int i = 0;; ++i) {
        const double v = es_n0_start_db + i * es_n0_step_db;
        if (v > es_n0_stop_db + 1e-9) break;
        points.push_back(v);
    }
    return points;
}

void ExperimentConfig::validate() const {
    if (kinds.empty()) throw std::invalid_argument("config: kinds must be non-empty");
    for (const auto& tag : kinds)
        if (tag != "naive") pipeline_kind_from_string(tag);
    if (regimes.empty()) throw std::invalid_argument("config: regimes must be non-empty");
    if (grid().empty()) throw std::invalid_argument("config: empty Es/N0 grid");
    if (max_symbols < 1000) throw std::invalid_argument("config: max_symbols must be >= 1000");
    if (target_errors < 10) throw std::invalid_argument("config: target_errors must be >= 10");
    if (!(responsivity > 0.0)) throw std::invalid_argument("config: responsivity must be > 0");
    if (modulation_order != 4 && modulation_order != 16 && modulation_order != 64)
        throw std::invalid_argument("config: modulation_order must be 4, 16 or 64");
    train.validate();
}

namespace {

constexpr std::uint64_t kTrainOnceIndex = 0xFFFFFFFFULL;
constexpr std::uint64_t kTrainPhase = 0;
constexpr std::uint64_t kMeasurePhase = 1;

} // namespace

std::vector<SerRecord> run_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto grid = cfg.grid();
    LinkConfig base_link;
    base_link.responsivity = cfg.responsivity;
    base_link.es = 1.0;

    std::vector<SerRecord> records;
    records.reserve(cfg.kinds.size() * cfg.regimes.size() * grid.size());
    const StopRule stop{cfg.max_symbols, cfg.target_errors};

    for (std::size_t ki = 0; ki < cfg.kinds.size(); ++ki) {
        const std::string& tag = cfg.kinds[ki];
        const bool is_naive = tag == "naive";
        for (std::size_t ri = 0; ri < cfg.regimes.size(); ++ri) {
            const RegimeSetting& regime = cfg.regimes[ri];
            std::optional<Pipeline> shared; // train-once-per-regime mode
            for (std::size_t pi = 0; pi < grid.size(); ++pi) {
                const double es_n0_db = grid[pi];
                try {
                    Rng measure_rng(job_seed(cfg.seed, {ki, ri, pi, kMeasurePhase}));
                    SerRecord rec;
                    if (is_naive) {
                        rec = measure_naive_ser(cfg.modulation_order, base_link,
                                                regime.turbulence, es_n0_db, measure_rng, stop);
                    } else {
                        const PipelineKind kind = pipeline_kind_from_string(tag);
                        if (!kind_is_trainable(kind)) {
                            Rng build_rng(job_seed(cfg.seed, {ki, ri, pi, kTrainPhase}));
                            LinkConfig link = base_link;
                            link.es_n0_db = es_n0_db;
                            const Pipeline p =
                                build_pipeline(kind, cfg.modulation_order, link, build_rng, cfg.arch);
                            rec = measure_ser(p, regime.turbulence, es_n0_db, measure_rng, stop);
                        } else if (cfg.train_es_n0_db) {
                            if (!shared) {
                                Rng train_rng(
                                    job_seed(cfg.seed, {ki, ri, kTrainOnceIndex, kTrainPhase}));
                                LinkConfig link = base_link;
                                link.es_n0_db = *cfg.train_es_n0_db;
                                Pipeline p = build_pipeline(kind, cfg.modulation_order, link,
                                                            train_rng, cfg.arch);
                                TrainConfig tc = cfg.train;
                                tc.es_n0_db = *cfg.train_es_n0_db;
                                tc.turbulence = regime.turbulence;
                                p.train(tc, train_rng);
                                shared = std::move(p);
                            }
                            rec = measure_ser(*shared, regime.turbulence, es_n0_db, measure_rng,
                                              stop);
                        } else {
                            Rng train_rng(job_seed(cfg.seed, {ki, ri, pi, kTrainPhase}));
                            LinkConfig link = base_link;
                            link.es_n0_db = es_n0_db;
                            Pipeline p =
                                build_pipeline(kind, cfg.modulation_order, link, train_rng, cfg.arch);
                            TrainConfig tc = cfg.train;
                            tc.es_n0_db = es_n0_db;
                            tc.turbulence = regime.turbulence;
                            p.train(tc, train_rng);
                            rec = measure_ser(p, regime.turbulence, es_n0_db, measure_rng, stop);
                        }
                    }
                    rec.pipeline_tag = tag;
                    rec.regime_label = regime.label;
                    records.push_back(std::move(rec));
                } catch (const std::exception& e) {
                    std::ostringstream msg;
                    msg << "sweep point (kind=" << tag << ", regime=" << regime.label
                        << ", es_n0_db=" << es_n0_db << ") failed: " << e.what();
                    throw std::runtime_error(msg.str());
                }
            }
        }
    }
    return records;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_csv(const std::vector<SerRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "'");
    out << "pipeline,regime,es_n0_db,ser,std_err,symbols,errors,seed\n";
    for (const auto& r : records) {
        out << r.pipeline_tag << ',' << r.regime_label << ',' << format_double(r.es_n0_db) << ','
            << format_double(r.ser) << ',' << format_double(r.standard_error) << ',' << r.symbols
            << ',' << r.errors << ',' << r.seed << '\n';
    }
    if (!out) throw std::runtime_error("write_csv: write failed for '" + path + "'");
}

std::vector<SerRecord> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "pipeline,regime,es_n0_db,ser,std_err,symbols,errors,seed")
        throw std::runtime_error("read_csv: bad header in '" + path + "'");
    std::vector<SerRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        SerRecord r;
        std::string field;
        auto next = [&]() {
            if (!std::getline(row, field, ','))
                throw std::runtime_error("read_csv: short row in '" + path + "'");
            return field;
        };
        r.pipeline_tag = next();
        r.regime_label = next();
        r.es_n0_db = std::stod(next());
        r.ser = std::stod(next());
        r.standard_error = std::stod(next());
        r.symbols = std::stoull(next());
        r.errors = std::stoull(next());
        r.seed = std::stoull(next());
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<ImmunityRow> immunity_report(const std::vector<SerRecord>& records, double es_n0_db) {
    std::vector<ImmunityRow> rows;
    std::vector<std::string> regime_order;
    for (const auto& r : records)
        if (std::find(regime_order.begin(), regime_order.end(), r.regime_label) ==
            regime_order.end())
            regime_order.push_back(r.regime_label);

    for (const auto& regime : regime_order) {
        const SerRecord* best_b = nullptr;
        for (const auto& r : records) {
            if (r.pipeline_tag != "b" || r.regime_label != regime) continue;
            if (best_b == nullptr ||
                std::fabs(r.es_n0_db - es_n0_db) < std::fabs(best_b->es_n0_db - es_n0_db))
                best_b = &r;
        }
        if (best_b == nullptr) continue;
        const SerRecord* match_e = nullptr;
        for (const auto& r : records)
            if (r.pipeline_tag == "e" && r.regime_label == regime &&
                r.es_n0_db == best_b->es_n0_db)
                match_e = &r;
        if (match_e == nullptr) continue;
        ImmunityRow row;
        row.regime_label = regime;
        row.es_n0_db = best_b->es_n0_db;
        row.ser_b = best_b->ser;
        row.ser_e = match_e->ser;
        row.ratio = match_e->ser / best_b->ser;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_immunity_report(const std::vector<ImmunityRow>& rows) {
    std::ostringstream out;
    out << "# turbulence immunity: SER(e) / SER(b) per regime\n";
    if (rows.empty()) {
        out << "# (unavailable: needs kinds b and e in the sweep)\n";
        return out.str();
    }
    for (const auto& row : rows) {
        out << "regime=" << row.regime_label << " es_n0_db=" << row.es_n0_db
            << " ser_b=" << row.ser_b << " ser_e=" << row.ser_e << " ratio=" << row.ratio << '\n';
    }
    return out.str();
}

namespace {

std::string trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string_view::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> tokens;
    std::istringstream in(value);
    std::string word;
    while (in >> word) {
        if (word.rfind("custom:", 0) == 0) {
            tokens.push_back(word);
            continue;
        }
        std::istringstream parts(word);
        std::string tok;
        while (std::getline(parts, tok, ','))
            if (!tok.empty()) tokens.push_back(tok);
    }
    return tokens;
}

double to_double(const std::string& s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw std::invalid_argument("expected a number");
    return v;
}

std::uint64_t to_u64(const std::string& s) {
    std::uint64_t v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw std::invalid_argument("expected a non-negative integer");
    return v;
}

int to_int(const std::string& s) {
    int v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw std::invalid_argument("expected an integer");
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument("expected true/false");
}

} // namespace

std::vector<GradCheckResult> pipeline_gradient_checks(std::uint64_t seed, std::size_t batch,
                                                      double step) {
    struct Shape {
        const char* name;
        int in, out;
        bool classify;
    };
    const Shape shapes[] = {
        {"detector 2->40x4->16", 2, 16, true},
        {"shaper 16->40x4->2", 16, 2, false},
        {"estimator 2->40x4->2", 2, 2, false},
    };
    std::vector<GradCheckResult> results;
    Rng rng(seed);
    for (const auto& shape : shapes) {
        NetworkSpec spec;
        spec.input_dim = shape.in;
        spec.output_dim = shape.out;
        spec.hidden_layers = 4;
        spec.neurons_per_layer = 40;
        spec.activation = Activation::relu;
        spec.output_head = OutputHead::linear;
        MlpNetwork net = init_network(spec, rng);

        Matrix probe(batch, static_cast<std::size_t>(shape.in));
        for (auto& v : probe.data) v = rng.uniform_pm1();

        // keep the probe away from relu kinks: a hidden pre-activation inside
        // the finite-difference window would flip its unit mid-check, so nudge
        // offending biases until every unit is decided with margin
        const double kink_margin = 400.0 * step;
        ForwardCache cache;
        for (int round = 0; round < 200; ++round) {
            forward(net, probe, cache);
            bool clean = true;
            for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) {
                const Matrix& z = cache.pre_activations[l];
                for (std::size_t j = 0; j < z.cols; ++j) {
                    bool near_kink = false;
                    for (std::size_t r = 0; r < z.rows; ++r)
                        near_kink = near_kink || std::fabs(z(r, j)) < kink_margin;
                    if (near_kink) {
                        net.biases[l][j] += 3.0 * kink_margin;
                        clean = false;
                    }
                }
            }
            if (clean) break;
        }

        LossFn loss;
        if (shape.classify) {
            std::vector<int> labels(batch);
            for (auto& l : labels) l = static_cast<int>(rng.uniform_below(shape.out));
            loss = [labels](const Matrix& out) {
                return softmax_cross_entropy(out, std::span<const int>(labels));
            };
        } else {
            Matrix targets(batch, static_cast<std::size_t>(shape.out));
            for (auto& v : targets.data) v = rng.uniform_pm1();
            loss = [targets](const Matrix& out) {
                Matrix grad(out.rows, out.cols);
                double l = 0.0;
                const double inv_k = 1.0 / static_cast<double>(out.rows);
                for (std::size_t i = 0; i < out.data.size(); ++i) {
                    const double d = out.data[i] - targets.data[i];
                    l += 0.5 * d * d * inv_k;
                    grad.data[i] = d * inv_k;
                }
                return std::pair<double, Matrix>{l, std::move(grad)};
            };
        }
        results.push_back({shape.name, gradient_check(net, loss, probe, step)});
    }
    return results;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_config: cannot open '" + path + "'");

    ExperimentConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;

        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("parse_config: " + path + ":" + std::to_string(line_no) +
                                     ": expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            if (key == "kinds") {
                cfg.kinds = split_list(value);
            } else if (key == "modulation_order") {
                cfg.modulation_order = to_int(value);
            } else if (key == "regimes") {
                cfg.regimes.clear();
                for (const auto& token : split_list(value))
                    cfg.regimes.push_back(RegimeSetting::parse(token));
            } else if (key == "esn0_start_db") {
                cfg.es_n0_start_db = to_double(value);
            } else if (key == "esn0_stop_db") {
                cfg.es_n0_stop_db = to_double(value);
            } else if (key == "esn0_step_db") {
                cfg.es_n0_step_db = to_double(value);
                if (!(cfg.es_n0_step_db > 0.0)) throw std::invalid_argument("must be > 0");
            } else if (key == "max_symbols") {
                cfg.max_symbols = to_u64(value);
            } else if (key == "target_errors") {
                cfg.target_errors = to_u64(value);
            } else if (key == "seed") {
                cfg.seed = to_u64(value);
            } else if (key == "out") {
                if (value.empty()) throw std::invalid_argument("expected a path");
                cfg.output_path = value;
            } else if (key == "batch_size") {
                cfg.train.batch_size = static_cast<std::size_t>(to_u64(value));
                if (cfg.train.batch_size < 1) throw std::invalid_argument("must be >= 1");
            } else if (key == "dataset_batches") {
                cfg.train.dataset_batches = to_int(value);
                if (cfg.train.dataset_batches < 1) throw std::invalid_argument("must be >= 1");
            } else if (key == "iterations") {
                cfg.train.iterations = to_int(value);
                if (cfg.train.iterations < 1) throw std::invalid_argument("must be >= 1");
            } else if (key == "optimizer") {
                if (value == "adam") cfg.train.optimizer = OptimizerState::Kind::adam;
                else if (value == "sgd") cfg.train.optimizer = OptimizerState::Kind::sgd;
                else throw std::invalid_argument("expected adam or sgd");
            } else if (key == "learning_rate") {
                cfg.train.learning_rate = to_double(value);
                if (!(cfg.train.learning_rate > 0.0)) throw std::invalid_argument("must be > 0");
            } else if (key == "activation") {
                cfg.arch.activation = activation_from_string(value);
            } else if (key == "hidden_layers") {
                cfg.arch.hidden_layers = to_int(value);
                if (cfg.arch.hidden_layers < 0) throw std::invalid_argument("must be >= 0");
            } else if (key == "hidden_neurons") {
                cfg.arch.hidden_neurons = to_int(value);
                if (cfg.arch.hidden_neurons < 1) throw std::invalid_argument("must be >= 1");
            } else if (key == "loss") {
                if (value != "softmax_cross_entropy")
                    throw std::invalid_argument("only softmax_cross_entropy is supported");
            } else if (key == "temperature") {
                cfg.train.temperature = to_double(value);
                if (!(cfg.train.temperature > 0.0)) throw std::invalid_argument("must be > 0");
            } else if (key == "responsivity") {
                cfg.responsivity = to_double(value);
                if (!(cfg.responsivity > 0.0)) throw std::invalid_argument("must be > 0");
            } else if (key == "train_esn0_db") {
                cfg.train_es_n0_db = to_double(value);
            } else if (key == "resample") {
                cfg.train.resample_each_iteration = to_bool(value);
            } else if (key == "report_esn0_db") {
                cfg.report_es_n0_db = to_double(value);
            } else {
                throw std::runtime_error("parse_config: " + path + ":" + std::to_string(line_no) +
                                         ": unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("parse_config: " + path + ":" + std::to_string(line_no) +
                                     ": key '" + key + "': " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

} // namespace fsodl
