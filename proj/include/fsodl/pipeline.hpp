#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fsodl/channel.hpp"
#include "fsodl/modem.hpp"
#include "fsodl/neural.hpp"

namespace fsodl {

/// The six transmitter/estimator/receiver structures:
///   a: QAM, perfect CSI, maximum-likelihood detector (no networks)
///   b: QAM, perfect CSI, DNN detector
///   c: DNN constellation shaper, perfect CSI, DNN detector
///   d: QAM, DNN channel estimator, maximum-likelihood detector
///   e: QAM, DNN channel estimator, DNN detector
///   f: DNN shaper, DNN estimator, DNN detector
enum class PipelineKind {
    a_qam_perfect_ml,
    b_qam_perfect_dnn,
    c_shaper_perfect_dnn,
    d_qam_dnnest_ml,
    e_qam_dnnest_dnn,
    f_shaper_dnnest_dnn,
};

PipelineKind pipeline_kind_from_string(std::string_view tag);
std::string to_string(PipelineKind kind);

bool kind_has_shaper(PipelineKind kind);    // c, f
bool kind_has_estimator(PipelineKind kind); // d, e, f
bool kind_has_detector(PipelineKind kind);  // b, c, e, f
bool kind_is_trainable(PipelineKind kind);  // all but a

/// Hidden topology shared by every network in a pipeline.
struct NetArch {
    int hidden_layers = 4;
    int hidden_neurons = 40;
    Activation activation = Activation::relu;
};

/// Training settings; defaults are the tuned reference hyperparameters.
struct TrainConfig {
    std::size_t batch_size = std::size_t{1} << 16;
    int dataset_batches = 4; // sample size / batch size ratio
    int iterations = 1000;
    OptimizerState::Kind optimizer = OptimizerState::Kind::adam;
    double learning_rate = 0.005;
    double es_n0_db = 14.0;
    std::optional<TurbulenceParams> turbulence{}; // nullopt: intensity fixed at 1
    std::uint64_t seed = 1;
    double temperature = 1.0; // soft-detection surrogate (structure d)
    bool resample_each_iteration = false;

    void validate() const;
};

/// One transmit -> channel -> receive structure with its owned networks.
/// Shaper maps one-hot (M) to 2 reals, estimator maps 2 to 2, detector maps
/// 2 to M logits. Training is single-owner; a trained pipeline is immutable
/// and safe to evaluate from many threads.
class Pipeline {
public:
    PipelineKind kind = PipelineKind::a_qam_perfect_ml;
    int modulation_order = 16;
    std::optional<MlpNetwork> shaper;
    std::optional<MlpNetwork> estimator;
    std::optional<MlpNetwork> detector;
    Constellation base_constellation;
    LinkConfig link;
    bool trained = false;

    /// Constellation point for symbol k: the Gray QAM point, or for shaper
    /// kinds the shaper output normalized over all M points.
    Complex transmit(int k) const;

    /// Shaper evaluated on every one-hot input, divided by sqrt(mean energy).
    /// Throws std::domain_error when the points collapse (mean energy < 1e-12)
    /// and std::logic_error for kinds without a shaper.
    Constellation learned_constellation() const;

    /// Estimator output read as a complex gain, magnitude clamped below at
    /// 1e-6. Kinds d, e, f only.
    Complex estimate_channel(Complex y) const;

    /// Symbol decision for a received sample. Perfect-CSI kinds (a, b, c)
    /// consume true_intensity; estimator kinds (d, e, f) ignore it.
    /// Throws std::logic_error when the pipeline is not trained (kind a exempt).
    int receive(Complex y, double true_intensity) const;

    /// Runs the end-to-end training loop for this structure and returns the
    /// per-iteration loss trace. Throws std::logic_error for kind a.
    std::vector<double> train(const TrainConfig& cfg, Rng& rng);

    /// Lower bound applied to |estimate| before any division.
    static constexpr double kGainClamp = 1e-6;

private:
    mutable std::optional<Constellation> learned_cache_;

    const Constellation& tx_constellation() const;
    friend Pipeline load_pipeline(std::istream& in);
};

/// Untrained pipeline with freshly initialized networks as the kind requires;
/// kind a has no parameters and is immediately usable.
Pipeline build_pipeline(PipelineKind kind, int modulation_order, const LinkConfig& link, Rng& rng,
                        const NetArch& arch = {});

/// Container format: kind tag, modulation order, link settings, then each
/// owned network in the mlp text format.
void save_pipeline(const Pipeline& pipeline, std::ostream& out);
Pipeline load_pipeline(std::istream& in);
void save_pipeline_file(const Pipeline& pipeline, const std::string& path);
Pipeline load_pipeline_file(const std::string& path);

} // namespace fsodl
