#include "fsodl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>

namespace fsodl {

PipelineKind pipeline_kind_from_string(std::string_view tag) {
    if (tag == "a" || tag == "a_qam_perfect_ml") return PipelineKind::a_qam_perfect_ml;
    if (tag == "b" || tag == "b_qam_perfect_dnn") return PipelineKind::b_qam_perfect_dnn;
    if (tag == "c" || tag == "c_shaper_perfect_dnn") return PipelineKind::c_shaper_perfect_dnn;
    if (tag == "d" || tag == "d_qam_dnnest_ml") return PipelineKind::d_qam_dnnest_ml;
    if (tag == "e" || tag == "e_qam_dnnest_dnn") return PipelineKind::e_qam_dnnest_dnn;
    if (tag == "f" || tag == "f_shaper_dnnest_dnn") return PipelineKind::f_shaper_dnnest_dnn;
    throw std::invalid_argument("unknown pipeline kind '" + std::string(tag) + "'");
}

std::string to_string(PipelineKind kind) {
    switch (kind) {
        case PipelineKind::a_qam_perfect_ml: return "a";
        case PipelineKind::b_qam_perfect_dnn: return "b";
        case PipelineKind::c_shaper_perfect_dnn: return "c";
        case PipelineKind::d_qam_dnnest_ml: return "d";
        case PipelineKind::e_qam_dnnest_dnn: return "e";
        case PipelineKind::f_shaper_dnnest_dnn: return "f";
    }
    return "a";
}

bool kind_has_shaper(PipelineKind kind) {
    return kind == PipelineKind::c_shaper_perfect_dnn || kind == PipelineKind::f_shaper_dnnest_dnn;
}

bool kind_has_estimator(PipelineKind kind) {
    return kind == PipelineKind::d_qam_dnnest_ml || kind == PipelineKind::e_qam_dnnest_dnn ||
           kind == PipelineKind::f_shaper_dnnest_dnn;
}

bool kind_has_detector(PipelineKind kind) {
    return kind == PipelineKind::b_qam_perfect_dnn || kind == PipelineKind::c_shaper_perfect_dnn ||
           kind == PipelineKind::e_qam_dnnest_dnn || kind == PipelineKind::f_shaper_dnnest_dnn;
}

bool kind_is_trainable(PipelineKind kind) {
    return kind != PipelineKind::a_qam_perfect_ml;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (dataset_batches < 1) throw std::invalid_argument("TrainConfig: dataset_batches must be >= 1");
    if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
    if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: learning rate must be >= 0");
    if (!(temperature > 0.0)) throw std::invalid_argument("TrainConfig: temperature must be > 0");
    noise_variance_for_snr(es_n0_db, 1.0); // rejects non-finite es_n0_db
}

Pipeline build_pipeline(PipelineKind kind, int modulation_order, const LinkConfig& link, Rng& rng,
                        const NetArch& arch) {
    Pipeline p;
    p.kind = kind;
    p.modulation_order = modulation_order;
    p.base_constellation = gray_qam_constellation(modulation_order);
    p.link = link;

    auto make_net = [&](int in, int out, OutputHead head) {
        NetworkSpec spec;
        spec.input_dim = in;
        spec.output_dim = out;
        spec.hidden_layers = arch.hidden_layers;
        spec.neurons_per_layer = arch.hidden_neurons;
        spec.activation = arch.activation;
        spec.output_head = head;
        return init_network(spec, rng);
    };
    if (kind_has_shaper(kind))
        p.shaper = make_net(modulation_order, 2, OutputHead::linear_pair);
    if (kind_has_estimator(kind)) p.estimator = make_net(2, 2, OutputHead::linear_pair);
    if (kind_has_detector(kind)) p.detector = make_net(2, modulation_order, OutputHead::linear);
    p.trained = !kind_is_trainable(kind);
    return p;
}

const Constellation& Pipeline::tx_constellation() const {
    if (!kind_has_shaper(kind)) return base_constellation;
    // cache only once trained (train/load refresh it); an untrained shaper may
    // still be mutated, so evaluate it fresh
    if (!trained) {
        learned_cache_ = learned_constellation();
    } else if (!learned_cache_) {
        learned_cache_ = learned_constellation();
    }
    return *learned_cache_;
}

Constellation Pipeline::learned_constellation() const {
    if (!kind_has_shaper(kind))
        throw std::logic_error("learned_constellation: this pipeline kind has no shaper");
    const int m = modulation_order;
    Matrix eye(m, m, 0.0);
    for (int u = 0; u < m; ++u) eye(u, u) = 1.0;
    const Matrix raw = forward(*shaper, eye);

    double energy = 0.0;
    for (int u = 0; u < m; ++u) energy += raw(u, 0) * raw(u, 0) + raw(u, 1) * raw(u, 1);
    energy /= m;
    if (energy < 1e-12)
        throw std::domain_error("learned_constellation: degenerate constellation (points collapsed)");
    const double inv_scale = 1.0 / std::sqrt(energy);

    Constellation c;
    c.source = Constellation::Source::learned;
    c.points.resize(m);
    for (int u = 0; u < m; ++u)
        c.points[u] = Complex{raw(u, 0) * inv_scale, raw(u, 1) * inv_scale};
    return c;
}

Complex Pipeline::transmit(int k) const {
    if (k < 0 || k >= modulation_order) throw std::out_of_range("transmit: symbol index out of range");
    return tx_constellation().points[k];
}

namespace {

Complex clamp_gain(Complex h) {
    const double mag = std::abs(h);
    if (mag >= Pipeline::kGainClamp) return h;
    if (mag == 0.0) return Complex{Pipeline::kGainClamp, 0.0};
    return h * (Pipeline::kGainClamp / mag);
}

int argmax_row(const double* row, int n) {
    int best = 0;
    for (int c = 1; c < n; ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

// per-symbol inference scratch; receive() stays allocation-free and pipelines
// remain safe to evaluate concurrently
thread_local ForwardCache g_inference_cache;
thread_local Matrix g_inference_input;

const Matrix& run_single(const MlpNetwork& net, double in0, double in1) {
    g_inference_input.resize(1, 2);
    g_inference_input(0, 0) = in0;
    g_inference_input(0, 1) = in1;
    return forward(net, g_inference_input, g_inference_cache);
}

} // namespace

Complex Pipeline::estimate_channel(Complex y) const {
    if (!kind_has_estimator(kind))
        throw std::logic_error("estimate_channel: this pipeline kind has no estimator");
    const Matrix& out = run_single(*estimator, y.real(), y.imag());
    return clamp_gain(Complex{out(0, 0), out(0, 1)});
}

int Pipeline::receive(Complex y, double true_intensity) const {
    if (!trained) throw std::logic_error("receive: pipeline is not trained");
    const double r = link.responsivity;
    switch (kind) {
        case PipelineKind::a_qam_perfect_ml:
            return ml_detect(y, Complex{true_intensity, 0.0}, r, base_constellation);
        case PipelineKind::b_qam_perfect_dnn:
        case PipelineKind::c_shaper_perfect_dnn: {
            const Complex z = y / (r * true_intensity);
            const Matrix& logits = run_single(*detector, z.real(), z.imag());
            return argmax_row(logits.row(0), modulation_order);
        }
        case PipelineKind::d_qam_dnnest_ml:
            return ml_detect(y, estimate_channel(y), r, base_constellation);
        case PipelineKind::e_qam_dnnest_dnn:
        case PipelineKind::f_shaper_dnnest_dnn: {
            const Complex z = y / (r * estimate_channel(y));
            const Matrix& logits = run_single(*detector, z.real(), z.imag());
            return argmax_row(logits.row(0), modulation_order);
        }
    }
    throw std::logic_error("receive: unreachable");
}

namespace {

struct Sample {
    int symbol;
    double intensity;
    Complex noise;
};

struct TrainScratch {
    Matrix eye;            // M x M one-hot identity
    Matrix y;              // K x 2 received samples
    Matrix z;              // K x 2 detector / surrogate input
    Matrix gz, gy, gh, gq, gp;
    Matrix raw_points;     // M x 2 shaper output copy
    Matrix q;              // M x 2 normalized constellation
    std::vector<Complex> gains;     // per-sample equalizer gain (estimator kinds)
    std::vector<char> clamped;
    std::vector<int> labels;
    ForwardCache shaper_cache, est_cache, det_cache;
    ParamGradients g_shaper, g_est, g_det;
};

// One optimizer update over one batch; returns the batch loss.
double train_step(Pipeline& p, std::span<const Sample> batch, const TrainConfig& cfg,
                  TrainScratch& ws, OptimizerState& opt_shaper, OptimizerState& opt_est,
                  OptimizerState& opt_det) {
    const int m = p.modulation_order;
    const std::size_t k_count = batch.size();
    const double r = p.link.responsivity;
    const bool has_shaper = kind_has_shaper(p.kind);
    const bool has_estimator = kind_has_estimator(p.kind);
    const bool surrogate_head = p.kind == PipelineKind::d_qam_dnnest_ml;

    ws.labels.resize(k_count);
    for (std::size_t i = 0; i < k_count; ++i) ws.labels[i] = batch[i].symbol;

    // --- transmit side ---
    double norm_scale = 1.0; // sqrt of mean energy of the raw shaper points
    if (has_shaper) {
        const Matrix& raw = forward(*p.shaper, ws.eye, ws.shaper_cache);
        ws.raw_points = raw;
        double energy = 0.0;
        for (int u = 0; u < m; ++u)
            energy += raw(u, 0) * raw(u, 0) + raw(u, 1) * raw(u, 1);
        energy /= m;
        if (energy < 1e-12)
            throw std::domain_error("train: degenerate constellation (shaper points collapsed)");
        norm_scale = std::sqrt(energy);
        ws.q.resize(m, 2);
        for (int u = 0; u < m; ++u) {
            ws.q(u, 0) = raw(u, 0) / norm_scale;
            ws.q(u, 1) = raw(u, 1) / norm_scale;
        }
    }
    auto tx_point = [&](int k) -> Complex {
        if (has_shaper) return Complex{ws.q(k, 0), ws.q(k, 1)};
        return p.base_constellation.points[k];
    };

    // --- channel ---
    ws.y.resize(k_count, 2);
    for (std::size_t i = 0; i < k_count; ++i) {
        const Complex x = tx_point(batch[i].symbol);
        const Complex y = r * batch[i].intensity * x + batch[i].noise;
        ws.y(i, 0) = y.real();
        ws.y(i, 1) = y.imag();
    }

    // --- equalization ---
    ws.z.resize(k_count, 2);
    if (has_estimator) {
        const Matrix& est_out = forward(*p.estimator, ws.y, ws.est_cache);
        ws.gains.resize(k_count);
        ws.clamped.assign(k_count, 0);
        for (std::size_t i = 0; i < k_count; ++i) {
            Complex h{est_out(i, 0), est_out(i, 1)};
            const Complex hc = clamp_gain(h);
            if (hc != h) ws.clamped[i] = 1;
            const Complex gain = r * hc;
            const Complex y{ws.y(i, 0), ws.y(i, 1)};
            const Complex z = y / gain;
            ws.gains[i] = gain;
            ws.z(i, 0) = z.real();
            ws.z(i, 1) = z.imag();
        }
    } else {
        for (std::size_t i = 0; i < k_count; ++i) {
            const double denom = r * batch[i].intensity;
            ws.z(i, 0) = ws.y(i, 0) / denom;
            ws.z(i, 1) = ws.y(i, 1) / denom;
        }
    }

    // --- head: loss and gradient wrt the equalized signal ---
    double loss = 0.0;
    const std::span<const int> labels(ws.labels);
    if (surrogate_head) {
        // soft detection against the base constellation
        const double inv_tau = 1.0 / cfg.temperature;
        Matrix logits(k_count, m);
        for (std::size_t i = 0; i < k_count; ++i) {
            double* row = logits.row(i);
            const Complex z{ws.z(i, 0), ws.z(i, 1)};
            for (int u = 0; u < m; ++u) row[u] = -std::norm(z - p.base_constellation.points[u]) * inv_tau;
        }
        auto [l, g_logits] = softmax_cross_entropy(logits, labels);
        loss = l;
        ws.gz.resize(k_count, 2);
        for (std::size_t i = 0; i < k_count; ++i) {
            const double* g_row = g_logits.row(i);
            const Complex z{ws.z(i, 0), ws.z(i, 1)};
            double acc_re = 0.0, acc_im = 0.0;
            for (int u = 0; u < m; ++u) {
                const Complex d = z - p.base_constellation.points[u];
                acc_re += g_row[u] * d.real();
                acc_im += g_row[u] * d.imag();
            }
            ws.gz(i, 0) = -2.0 * inv_tau * acc_re;
            ws.gz(i, 1) = -2.0 * inv_tau * acc_im;
        }
    } else {
        const Matrix& logits = forward(*p.detector, ws.z, ws.det_cache);
        auto [l, g_logits] = softmax_cross_entropy(logits, labels);
        loss = l;
        const bool need_gz = has_shaper || has_estimator;
        backward(*p.detector, ws.det_cache, g_logits, ws.g_det, need_gz ? &ws.gz : nullptr);
    }

    // --- backward through equalization ---
    const bool need_gy = p.kind == PipelineKind::f_shaper_dnnest_dnn;
    if (has_estimator) {
        ws.gh.resize(k_count, 2);
        if (need_gy) ws.gy.resize(k_count, 2);
        for (std::size_t i = 0; i < k_count; ++i) {
            const double gz_re = ws.gz(i, 0), gz_im = ws.gz(i, 1);
            const double a = ws.gains[i].real(), b = ws.gains[i].imag();
            const double mag2 = a * a + b * b;
            const double z_re = ws.z(i, 0), z_im = ws.z(i, 1);
            const double c = ws.y(i, 0), d = ws.y(i, 1);
            const double zdot = gz_re * z_re + gz_im * z_im;
            if (ws.clamped[i]) {
                ws.gh(i, 0) = 0.0;
                ws.gh(i, 1) = 0.0;
            } else {
                // z = y / gain, gain = r * h
                ws.gh(i, 0) = r * (gz_re * c + gz_im * d - 2.0 * a * zdot) / mag2;
                ws.gh(i, 1) = r * (gz_re * d - gz_im * c - 2.0 * b * zdot) / mag2;
            }
            if (need_gy) {
                ws.gy(i, 0) = (gz_re * a - gz_im * b) / mag2;
                ws.gy(i, 1) = (gz_im * a + gz_re * b) / mag2;
            }
        }
        Matrix* est_input_grad = need_gy ? &ws.gp /* reuse as temp */ : nullptr;
        backward(*p.estimator, ws.est_cache, ws.gh, ws.g_est, est_input_grad);
        if (need_gy)
            for (std::size_t i = 0; i < 2 * k_count; ++i) ws.gy.data[i] += ws.gp.data[i];
    }

    // --- backward to the shaper ---
    if (has_shaper) {
        ws.gq.resize(m, 2);
        std::fill(ws.gq.data.begin(), ws.gq.data.end(), 0.0);
        if (has_estimator) {
            // dy/dx = r * I per sample
            for (std::size_t i = 0; i < k_count; ++i) {
                const double scale = r * batch[i].intensity;
                ws.gq(batch[i].symbol, 0) += scale * ws.gy(i, 0);
                ws.gq(batch[i].symbol, 1) += scale * ws.gy(i, 1);
            }
        } else {
            // multiply by r*I then divide by it: dz/dx is the identity
            for (std::size_t i = 0; i < k_count; ++i) {
                ws.gq(batch[i].symbol, 0) += ws.gz(i, 0);
                ws.gq(batch[i].symbol, 1) += ws.gz(i, 1);
            }
        }
        // q = p_raw / s with s^2 = mean |p_raw|^2
        const double s = norm_scale;
        double dot = 0.0;
        for (int u = 0; u < m; ++u)
            dot += ws.gq(u, 0) * ws.raw_points(u, 0) + ws.gq(u, 1) * ws.raw_points(u, 1);
        const double coef = dot / (m * s * s * s);
        ws.gp.resize(m, 2);
        for (int u = 0; u < m; ++u) {
            ws.gp(u, 0) = ws.gq(u, 0) / s - coef * ws.raw_points(u, 0);
            ws.gp(u, 1) = ws.gq(u, 1) / s - coef * ws.raw_points(u, 1);
        }
        backward(*p.shaper, ws.shaper_cache, ws.gp, ws.g_shaper, nullptr);
    }

    // --- parameter updates ---
    if (has_shaper) optimizer_step(*p.shaper, ws.g_shaper, opt_shaper);
    if (has_estimator) optimizer_step(*p.estimator, ws.g_est, opt_est);
    if (!surrogate_head) optimizer_step(*p.detector, ws.g_det, opt_det);
    return loss;
}

} // namespace

std::vector<double> Pipeline::train(const TrainConfig& cfg, Rng& rng) {
    if (!kind_is_trainable(kind)) throw std::logic_error("train: pipeline kind a has nothing to train");
    cfg.validate();
    const double sigma2 = noise_variance_for_snr(cfg.es_n0_db, link.es);
    const int m = modulation_order;

    auto draw_batch = [&](std::vector<Sample>& batch) {
        batch.resize(cfg.batch_size);
        for (auto& s : batch) {
            s.symbol = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(m)));
            s.intensity = cfg.turbulence ? sample_intensity(rng, *cfg.turbulence) : 1.0;
            s.noise = sample_gaussian_pair(rng, sigma2);
        }
    };

    std::vector<std::vector<Sample>> dataset;
    if (!cfg.resample_each_iteration) {
        dataset.resize(cfg.dataset_batches);
        for (auto& batch : dataset) draw_batch(batch);
    }

    auto make_opt = [&] {
        return cfg.optimizer == OptimizerState::Kind::sgd ? OptimizerState::sgd(cfg.learning_rate)
                                                          : OptimizerState::adam(cfg.learning_rate);
    };
    OptimizerState opt_shaper = make_opt(), opt_est = make_opt(), opt_det = make_opt();

    TrainScratch ws;
    if (kind_has_shaper(kind)) {
        ws.eye.resize(m, m);
        std::fill(ws.eye.data.begin(), ws.eye.data.end(), 0.0);
        for (int u = 0; u < m; ++u) ws.eye(u, u) = 1.0;
    }

    std::vector<double> trace;
    trace.reserve(cfg.iterations);
    std::vector<Sample> fresh;
    for (int it = 0; it < cfg.iterations; ++it) {
        const std::vector<Sample>* batch;
        if (cfg.resample_each_iteration) {
            draw_batch(fresh);
            batch = &fresh;
        } else {
            batch = &dataset[static_cast<std::size_t>(it) % dataset.size()];
        }
        const double loss =
            train_step(*this, *batch, cfg, ws, opt_shaper, opt_est, opt_det);
        if (!std::isfinite(loss)) throw std::runtime_error("train: loss diverged to non-finite");
        trace.push_back(loss);
    }

    trained = true;
    learned_cache_.reset();
    if (kind_has_shaper(kind)) learned_cache_ = learned_constellation();
    return trace;
}

void save_pipeline(const Pipeline& p, std::ostream& out) {
    out << "fsodl-pipeline 1\n";
    out << "kind " << to_string(p.kind) << '\n';
    out << "modulation_order " << p.modulation_order << '\n';
    out << std::setprecision(17);
    out << "responsivity " << p.link.responsivity << '\n';
    out << "es_n0_db " << p.link.es_n0_db << '\n';
    out << "es " << p.link.es << '\n';
    if (p.link.turbulence)
        out << "turbulence " << p.link.turbulence->label() << ' ' << p.link.turbulence->alpha << ' '
            << p.link.turbulence->beta << '\n';
    else
        out << "turbulence none\n";
    out << "trained " << (p.trained ? 1 : 0) << '\n';
    auto dump = [&](const char* name, const std::optional<MlpNetwork>& net) {
        out << name << ' ' << (net ? 1 : 0) << '\n';
        if (net) save_network(*net, out);
    };
    dump("shaper", p.shaper);
    dump("estimator", p.estimator);
    dump("detector", p.detector);
    if (!out) throw std::runtime_error("save_pipeline: write failed");
}

Pipeline load_pipeline(std::istream& in) {
    std::string magic, key, value;
    int version = 0;
    in >> magic >> version;
    if (!in || magic != "fsodl-pipeline" || version != 1)
        throw std::runtime_error("load_pipeline: bad header");

    Pipeline p;
    in >> key >> value;
    if (key != "kind") throw std::runtime_error("load_pipeline: expected kind");
    p.kind = pipeline_kind_from_string(value);
    auto expect = [&](const char* name, auto& slot) {
        in >> key >> slot;
        if (!in || key != name)
            throw std::runtime_error(std::string("load_pipeline: expected ") + name);
    };
    expect("modulation_order", p.modulation_order);
    expect("responsivity", p.link.responsivity);
    expect("es_n0_db", p.link.es_n0_db);
    expect("es", p.link.es);
    in >> key >> value;
    if (!in || key != "turbulence") throw std::runtime_error("load_pipeline: expected turbulence");
    if (value == "none") {
        p.link.turbulence.reset();
    } else {
        double alpha = 0.0, beta = 0.0;
        in >> alpha >> beta;
        TurbulenceParams t = TurbulenceParams::custom(alpha, beta);
        if (value == "weak") t.regime = Regime::weak;
        else if (value == "moderate") t.regime = Regime::moderate;
        else if (value == "strong") t.regime = Regime::strong;
        p.link.turbulence = t;
    }
    int trained_flag = 0;
    in >> key >> trained_flag;
    if (key != "trained") throw std::runtime_error("load_pipeline: expected trained");
    if (!in) throw std::runtime_error("load_pipeline: truncated settings");

    auto read_net = [&](const char* name) -> std::optional<MlpNetwork> {
        int present = 0;
        in >> key >> present;
        if (!in || key != name)
            throw std::runtime_error(std::string("load_pipeline: expected ") + name);
        if (!present) return std::nullopt;
        return load_network(in);
    };
    p.shaper = read_net("shaper");
    p.estimator = read_net("estimator");
    p.detector = read_net("detector");

    if (kind_has_shaper(p.kind) != p.shaper.has_value() ||
        kind_has_estimator(p.kind) != p.estimator.has_value() ||
        kind_has_detector(p.kind) != p.detector.has_value())
        throw std::runtime_error("load_pipeline: networks do not match pipeline kind");

    p.base_constellation = gray_qam_constellation(p.modulation_order);
    p.trained = trained_flag != 0;
    if (p.trained && kind_has_shaper(p.kind)) p.learned_cache_ = p.learned_constellation();
    return p;
}

void save_pipeline_file(const Pipeline& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_pipeline: cannot open '" + path + "'");
    save_pipeline(p, out);
}

Pipeline load_pipeline_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_pipeline: cannot open '" + path + "'");
    return load_pipeline(in);
}

} // namespace fsodl
