#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "fsodl/harness.hpp"

namespace py = pybind11;
using namespace fsodl;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols) throw std::invalid_argument("ragged batch");
        for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = rows[r][c];
    }
    return m;
}

std::vector<std::vector<double>> from_matrix(const Matrix& m) {
    std::vector<std::vector<double>> rows(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) rows[r].assign(m.row(r), m.row(r) + m.cols);
    return rows;
}

} // namespace

PYBIND11_MODULE(_fsodl, m) {
    m.doc() = "FSO link simulation over Gamma-Gamma turbulence with learned "
              "transmitter/estimator/receiver structures";

    // --- rng ---
    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def_static("substream", &Rng::substream, py::arg("seed"), py::arg("index"))
        .def("next_u64", &Rng::next_u64)
        .def("uniform01", &Rng::uniform01)
        .def("gaussian", &Rng::gaussian)
        .def("uniform_below", &Rng::uniform_below, py::arg("n"))
        .def_property_readonly("seed", &Rng::seed);
    m.def("mix_seed", &mix_seed, py::arg("seed"), py::arg("index"));
    m.def("sample_gamma", &sample_gamma, py::arg("rng"), py::arg("shape"), py::arg("scale"));
    m.def("sample_gaussian_pair", &sample_gaussian_pair, py::arg("rng"),
          py::arg("total_variance"));

    // --- channel ---
    py::class_<TurbulenceParams>(m, "TurbulenceParams")
        .def_static("weak", &TurbulenceParams::weak)
        .def_static("moderate", &TurbulenceParams::moderate)
        .def_static("strong", &TurbulenceParams::strong)
        .def_static("custom", &TurbulenceParams::custom, py::arg("alpha"), py::arg("beta"))
        .def_static("parse", &TurbulenceParams::parse, py::arg("token"))
        .def_readonly("alpha", &TurbulenceParams::alpha)
        .def_readonly("beta", &TurbulenceParams::beta)
        .def_property_readonly("label", &TurbulenceParams::label)
        .def("__repr__", [](const TurbulenceParams& p) {
            std::ostringstream out;
            out << "TurbulenceParams(" << p.label() << ", alpha=" << p.alpha
                << ", beta=" << p.beta << ")";
            return out.str();
        });
    py::class_<LinkConfig>(m, "LinkConfig")
        .def(py::init<>())
        .def_readwrite("responsivity", &LinkConfig::responsivity)
        .def_readwrite("es_n0_db", &LinkConfig::es_n0_db)
        .def_readwrite("es", &LinkConfig::es)
        .def_readwrite("turbulence", &LinkConfig::turbulence)
        .def("noise_variance", &LinkConfig::noise_variance);
    m.def("scintillation_index", &scintillation_index, py::arg("params"));
    m.def("sample_intensity", &sample_intensity, py::arg("rng"), py::arg("params"));
    m.def("noise_variance_for_snr", &noise_variance_for_snr, py::arg("es_n0_db"), py::arg("es"));
    m.def("apply_link", &apply_link, py::arg("x"), py::arg("intensity"), py::arg("cfg"),
          py::arg("rng"));

    // --- modem ---
    py::class_<Constellation>(m, "Constellation")
        .def_readonly("points", &Constellation::points)
        .def_property_readonly("order", &Constellation::order)
        .def("mean_energy", &Constellation::mean_energy)
        .def_property_readonly("learned", [](const Constellation& c) {
            return c.source == Constellation::Source::learned;
        });
    m.def("gray_qam_constellation", &gray_qam_constellation, py::arg("order"));
    m.def("one_hot", &one_hot, py::arg("k"), py::arg("order"));
    m.def("ml_detect", &ml_detect, py::arg("y"), py::arg("channel_gain"), py::arg("responsivity"),
          py::arg("constellation"));
    m.def("naive_detect", &naive_detect, py::arg("y"), py::arg("responsivity"),
          py::arg("constellation"));
    m.def("soft_detect", &soft_detect, py::arg("y_eq"), py::arg("constellation"),
          py::arg("temperature"));

    // --- neural ---
    py::enum_<Activation>(m, "Activation")
        .value("relu", Activation::relu)
        .value("tanh", Activation::tanh)
        .value("sigmoid", Activation::sigmoid);
    py::enum_<OutputHead>(m, "OutputHead")
        .value("linear", OutputHead::linear)
        .value("softmax", OutputHead::softmax)
        .value("linear_pair", OutputHead::linear_pair);
    py::class_<NetworkSpec>(m, "NetworkSpec")
        .def(py::init<>())
        .def_readwrite("input_dim", &NetworkSpec::input_dim)
        .def_readwrite("output_dim", &NetworkSpec::output_dim)
        .def_readwrite("hidden_layers", &NetworkSpec::hidden_layers)
        .def_readwrite("neurons_per_layer", &NetworkSpec::neurons_per_layer)
        .def_readwrite("activation", &NetworkSpec::activation)
        .def_readwrite("output_head", &NetworkSpec::output_head)
        .def("layer_sizes", &NetworkSpec::layer_sizes);
    py::class_<MlpNetwork>(m, "MlpNetwork")
        .def_readonly("spec", &MlpNetwork::spec)
        .def("parameter_count", &MlpNetwork::parameter_count);
    m.def("init_network", &init_network, py::arg("spec"), py::arg("rng"));
    m.def(
        "forward",
        [](const MlpNetwork& net, const std::vector<std::vector<double>>& batch) {
            return from_matrix(forward(net, to_matrix(batch)));
        },
        py::arg("net"), py::arg("batch"));
    m.def(
        "softmax_cross_entropy",
        [](const std::vector<std::vector<double>>& logits, const std::vector<int>& labels) {
            const auto [loss, grad] =
                softmax_cross_entropy(to_matrix(logits), std::span<const int>(labels));
            return py::make_tuple(loss, from_matrix(grad));
        },
        py::arg("logits"), py::arg("labels"));
    m.def(
        "save_network",
        [](const MlpNetwork& net, const std::string& path) {
            std::ofstream out(path);
            if (!out) throw std::runtime_error("save_network: cannot open '" + path + "'");
            save_network(net, out);
        },
        py::arg("net"), py::arg("path"));
    m.def(
        "load_network",
        [](const std::string& path) {
            std::ifstream in(path);
            if (!in) throw std::runtime_error("load_network: cannot open '" + path + "'");
            return load_network(in);
        },
        py::arg("path"));

    // --- pipelines ---
    py::enum_<PipelineKind>(m, "PipelineKind")
        .value("a_qam_perfect_ml", PipelineKind::a_qam_perfect_ml)
        .value("b_qam_perfect_dnn", PipelineKind::b_qam_perfect_dnn)
        .value("c_shaper_perfect_dnn", PipelineKind::c_shaper_perfect_dnn)
        .value("d_qam_dnnest_ml", PipelineKind::d_qam_dnnest_ml)
        .value("e_qam_dnnest_dnn", PipelineKind::e_qam_dnnest_dnn)
        .value("f_shaper_dnnest_dnn", PipelineKind::f_shaper_dnnest_dnn);
    m.def("pipeline_kind_from_string", &pipeline_kind_from_string, py::arg("tag"));
    m.def("pipeline_kind_tag", [](PipelineKind k) { return to_string(k); }, py::arg("kind"));
    py::class_<NetArch>(m, "NetArch")
        .def(py::init<>())
        .def_readwrite("hidden_layers", &NetArch::hidden_layers)
        .def_readwrite("hidden_neurons", &NetArch::hidden_neurons)
        .def_readwrite("activation", &NetArch::activation);
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("dataset_batches", &TrainConfig::dataset_batches)
        .def_readwrite("iterations", &TrainConfig::iterations)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("es_n0_db", &TrainConfig::es_n0_db)
        .def_readwrite("turbulence", &TrainConfig::turbulence)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("temperature", &TrainConfig::temperature)
        .def_readwrite("resample_each_iteration", &TrainConfig::resample_each_iteration);
    py::class_<Pipeline>(m, "Pipeline")
        .def_readonly("kind", &Pipeline::kind)
        .def_readonly("modulation_order", &Pipeline::modulation_order)
        .def_readonly("trained", &Pipeline::trained)
        .def_readonly("link", &Pipeline::link)
        .def("transmit", &Pipeline::transmit, py::arg("k"))
        .def("learned_constellation", &Pipeline::learned_constellation)
        .def("estimate_channel", &Pipeline::estimate_channel, py::arg("y"))
        .def("receive", &Pipeline::receive, py::arg("y"), py::arg("true_intensity"))
        .def("train", &Pipeline::train, py::arg("cfg"), py::arg("rng"))
        .def("save", &save_pipeline_file, py::arg("path"));
    m.def("build_pipeline", &build_pipeline, py::arg("kind"), py::arg("modulation_order"),
          py::arg("link"), py::arg("rng"), py::arg("arch") = NetArch{});
    m.def("load_pipeline", &load_pipeline_file, py::arg("path"));

    // --- harness ---
    py::class_<StopRule>(m, "StopRule")
        .def(py::init<>())
        .def_readwrite("max_symbols", &StopRule::max_symbols)
        .def_readwrite("target_errors", &StopRule::target_errors);
    py::class_<SerRecord>(m, "SerRecord")
        .def_readonly("pipeline_tag", &SerRecord::pipeline_tag)
        .def_readonly("regime_label", &SerRecord::regime_label)
        .def_readonly("es_n0_db", &SerRecord::es_n0_db)
        .def_readonly("ser", &SerRecord::ser)
        .def_readonly("standard_error", &SerRecord::standard_error)
        .def_readonly("symbols", &SerRecord::symbols)
        .def_readonly("errors", &SerRecord::errors)
        .def_readonly("seed", &SerRecord::seed)
        .def("__repr__", [](const SerRecord& r) {
            std::ostringstream out;
            out << "SerRecord(" << r.pipeline_tag << ", " << r.regime_label
                << ", es_n0_db=" << r.es_n0_db << ", ser=" << r.ser << ")";
            return out.str();
        });
    py::class_<RegimeSetting>(m, "RegimeSetting")
        .def_static("parse", &RegimeSetting::parse, py::arg("token"))
        .def_readonly("label", &RegimeSetting::label)
        .def_readonly("turbulence", &RegimeSetting::turbulence);
    m.def("measure_ser", &measure_ser, py::arg("pipeline"), py::arg("turbulence"),
          py::arg("es_n0_db"), py::arg("rng"), py::arg("stop"));
    m.def("measure_naive_ser", &measure_naive_ser, py::arg("modulation_order"),
          py::arg("link_base"), py::arg("turbulence"), py::arg("es_n0_db"), py::arg("rng"),
          py::arg("stop"));
    m.def("awgn_qam_ser_analytic", &awgn_qam_ser_analytic, py::arg("modulation_order"),
          py::arg("es_n0_db"));
    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_readwrite("kinds", &ExperimentConfig::kinds)
        .def_readwrite("modulation_order", &ExperimentConfig::modulation_order)
        .def_readwrite("regimes", &ExperimentConfig::regimes)
        .def_readwrite("es_n0_start_db", &ExperimentConfig::es_n0_start_db)
        .def_readwrite("es_n0_stop_db", &ExperimentConfig::es_n0_stop_db)
        .def_readwrite("es_n0_step_db", &ExperimentConfig::es_n0_step_db)
        .def_readwrite("max_symbols", &ExperimentConfig::max_symbols)
        .def_readwrite("target_errors", &ExperimentConfig::target_errors)
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_readwrite("output_path", &ExperimentConfig::output_path)
        .def_readwrite("responsivity", &ExperimentConfig::responsivity)
        .def_readwrite("train", &ExperimentConfig::train)
        .def_readwrite("train_es_n0_db", &ExperimentConfig::train_es_n0_db)
        .def_readwrite("arch", &ExperimentConfig::arch)
        .def_readwrite("report_es_n0_db", &ExperimentConfig::report_es_n0_db)
        .def("grid", &ExperimentConfig::grid)
        .def("validate", &ExperimentConfig::validate);
    m.def("parse_config", &parse_config, py::arg("path"));
    m.def("run_sweep", &run_sweep, py::arg("cfg"));
    m.def("write_csv", &write_csv, py::arg("records"), py::arg("path"));
    m.def("read_csv", &read_csv, py::arg("path"));
    py::class_<ImmunityRow>(m, "ImmunityRow")
        .def_readonly("regime_label", &ImmunityRow::regime_label)
        .def_readonly("es_n0_db", &ImmunityRow::es_n0_db)
        .def_readonly("ser_b", &ImmunityRow::ser_b)
        .def_readonly("ser_e", &ImmunityRow::ser_e)
        .def_readonly("ratio", &ImmunityRow::ratio);
    m.def("immunity_report", &immunity_report, py::arg("records"), py::arg("es_n0_db"));
    m.def("format_immunity_report", &format_immunity_report, py::arg("rows"));
    py::class_<GradCheckResult>(m, "GradCheckResult")
        .def_readonly("shape", &GradCheckResult::shape)
        .def_readonly("max_rel_error", &GradCheckResult::max_rel_error);
    m.def("pipeline_gradient_checks", &pipeline_gradient_checks, py::arg("seed"), py::arg("batch"),
          py::arg("step"));
}
