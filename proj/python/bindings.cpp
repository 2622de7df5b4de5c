#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "svitq/checkpoint.hpp"
#include "svitq/dataset.hpp"
#include "svitq/error.hpp"
#include "svitq/model.hpp"
#include "svitq/quant.hpp"
#include "svitq/report.hpp"
#include "svitq/runtime.hpp"
#include "svitq/search.hpp"
#include "svitq/train.hpp"

namespace py = pybind11;
using namespace svitq;

namespace {

Tensor tensor_from_list(const std::vector<float>& values) {
    return Tensor({values.size()}, values);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "post-training quantization toolkit for spike-driven vision transformers";

    py::register_exception<Error>(m, "SvitqError");

    py::class_<Tensor>(m, "Tensor")
        .def(py::init(&tensor_from_list), py::arg("values"))
        .def_readonly("shape", &Tensor::shape)
        .def_readonly("data", &Tensor::data)
        .def("numel", &Tensor::numel);

    py::enum_<QuantMode>(m, "QuantMode")
        .value("faithful", QuantMode::Faithful)
        .value("symmetric", QuantMode::Symmetric);

    py::class_<QuantParams>(m, "QuantParams")
        .def_readonly("bit", &QuantParams::bit)
        .def_readonly("scale", &QuantParams::scale)
        .def_readonly("q_min", &QuantParams::q_min)
        .def_readonly("q_max", &QuantParams::q_max)
        .def_readonly("w_min", &QuantParams::w_min)
        .def_readonly("w_max", &QuantParams::w_max)
        .def_readonly("degenerate", &QuantParams::degenerate);

    py::class_<QuantizedTensor>(m, "QuantizedTensor")
        .def_readonly("shape", &QuantizedTensor::shape)
        .def_readonly("codes", &QuantizedTensor::q_data)
        .def_readonly("params", &QuantizedTensor::params);

    m.def("quant_range", &quant_range, py::arg("bit"),
          "(q_min, q_max) for a reduced bit precision");
    m.def(
        "compute_scale",
        [](const std::vector<float>& values, int bit, QuantMode mode) {
            return compute_scale(tensor_from_list(values), bit, mode);
        },
        py::arg("values"), py::arg("bit"), py::arg("mode") = QuantMode::Faithful);
    m.def(
        "quantize",
        [](const std::vector<float>& values, int bit, QuantMode mode) {
            return quantize_tensor(tensor_from_list(values), bit, mode);
        },
        py::arg("values"), py::arg("bit"), py::arg("mode") = QuantMode::Faithful);
    m.def(
        "dequantize",
        [](const QuantizedTensor& q) { return dequantize(q).data; }, py::arg("quantized"));

    py::class_<ToyConfig>(m, "ToyConfig")
        .def(py::init<>())
        .def_readwrite("base_channels", &ToyConfig::base_channels)
        .def_readwrite("input_h", &ToyConfig::input_h)
        .def_readwrite("input_w", &ToyConfig::input_w)
        .def_readwrite("in_channels", &ToyConfig::in_channels)
        .def_readwrite("tran_blocks_s3", &ToyConfig::tran_blocks_s3)
        .def_readwrite("tran_blocks_s4", &ToyConfig::tran_blocks_s4)
        .def_readwrite("classes", &ToyConfig::classes)
        .def_readwrite("timesteps", &ToyConfig::timesteps);

    py::class_<NetworkModel>(m, "NetworkModel")
        .def_property_readonly("layer_count",
                               [](const NetworkModel& m_) { return m_.layers.size(); })
        .def_property_readonly("timesteps", &NetworkModel::timesteps)
        .def_property_readonly("precision_map",
                               [](const NetworkModel& m_) { return m_.precision_map; })
        .def("param_count", [](const NetworkModel& m_) { return param_count(m_); })
        .def("layers", [](const NetworkModel& m_) {
            py::list out;
            for (const auto& li : enumerate_quantizable_layers(m_)) {
                py::dict d;
                d["id"] = li.id;
                d["kind"] = layer_kind_name(li.kind);
                d["block"] = li.block_label;
                d["params"] = li.param_count;
                out.append(std::move(d));
            }
            return out;
        });

    m.def("build_toy_model", &build_toy_model, py::arg("config"), py::arg("seed") = 1);
    m.def("quantize_layer", &quantize_layer, py::arg("model"), py::arg("layer_id"),
          py::arg("bit"), py::arg("mode") = QuantMode::Faithful);
    m.def(
        "apply_setting",
        [](const NetworkModel& model, const std::map<int, int>& assignment, QuantMode mode) {
            QuantSpec spec;
            spec.assignment = assignment;
            spec.provenance = "manual";
            return apply_setting(model, spec, mode);
        },
        py::arg("model"), py::arg("assignment"), py::arg("mode") = QuantMode::Faithful);

    m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"),
          py::arg("dataset_tag") = "");
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("size", &Dataset::size)
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("classes", &Dataset::classes);

    m.def("generate_synthetic", &generate_synthetic, py::arg("seed"), py::arg("n"),
          py::arg("classes"), py::arg("h") = 16, py::arg("w") = 16, py::arg("noise") = 0.08);
    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"),
          py::arg("classes"));
    m.def("evaluate", &evaluate, py::arg("model"), py::arg("data"));
    m.def(
        "train_toy",
        [](const NetworkModel& model, const Dataset& train, const Dataset& val, int epochs,
           int batch, double lr, uint64_t seed) {
            TrainOptions opts{epochs, batch, lr, seed};
            TrainResult r = train_toy(model, train, val, opts);
            return py::make_tuple(r.model, r.val_accuracy);
        },
        py::arg("model"), py::arg("train"), py::arg("val"), py::arg("epochs") = 10,
        py::arg("batch") = 32, py::arg("lr") = 2e-3, py::arg("seed") = 1);

    m.def("bytes_for", &bytes_for, py::arg("param_count"), py::arg("bit"));
    m.def("to_mib", &to_mib, py::arg("bytes"));
    m.def("saving_percent", &saving_percent, py::arg("reference"), py::arg("actual"));
    m.def(
        "footprint",
        [](const NetworkModel& model) {
            const FootprintBreakdown fb = footprint_bytes(model);
            py::dict d;
            d["total_bytes"] = fb.total_bytes;
            d["reference_bytes"] = fb.reference_bytes;
            d["saving_percent"] = fb.saving;
            return d;
        },
        py::arg("model"));

    m.def(
        "forward_logits",
        [](const NetworkModel& model, const Dataset& data) {
            const Tensor logits = forward(model, data);
            std::vector<std::vector<float>> out(logits.shape[0]);
            for (size_t i = 0; i < logits.shape[0]; ++i)
                out[i].assign(logits.data.begin() + static_cast<long>(i * logits.shape[1]),
                              logits.data.begin() + static_cast<long>((i + 1) * logits.shape[1]));
            return out;
        },
        py::arg("model"), py::arg("batch"));
    m.def(
        "spike_rates",
        [](const NetworkModel& model, const Dataset& data) {
            std::map<int, double> sum;
            std::map<int, size_t> count;
            forward(model, data, [&](int slot, int, const Tensor& s) {
                for (float v : s.data) sum[slot] += v;
                count[slot] += s.numel();
            });
            std::map<int, double> rate;
            for (const auto& [slot, total] : sum)
                rate[slot] = total / static_cast<double>(count[slot]);
            return rate;
        },
        py::arg("model"), py::arg("batch"));

    m.def("sensitivity_table_from_json", &sensitivity_table_from_json, py::arg("text"));
    m.def("sensitivity_table_to_json", &sensitivity_table_to_json, py::arg("table"));
    m.def(
        "select_base_settings",
        [](const SensitivityTable& table, double delta) {
            const BaseSettings base = select_base_settings(table, ThresholdPolicy{delta});
            return py::make_tuple(base.high, base.low);
        },
        py::arg("table"), py::arg("delta") = 5.0);
    py::class_<SensitivityTable>(m, "SensitivityTable")
        .def_readonly("bits", &SensitivityTable::bits)
        .def_readonly("baseline_accuracy", &SensitivityTable::baseline_accuracy)
        .def("accuracy", &SensitivityTable::accuracy, py::arg("layer_id"), py::arg("bit"));

    // search stages with a python evaluator: model -> accuracy percent.
    // python callbacks hold the GIL, so these run single-threaded.
    m.def(
        "layerwise_sweep",
        [](const NetworkModel& model, const std::function<double(const NetworkModel&)>& ev,
           std::vector<int> bits, QuantMode mode) {
            SweepOptions opts;
            if (!bits.empty()) opts.bits = std::move(bits);
            opts.mode = mode;
            return layerwise_sweep(model, ev, opts);
        },
        py::arg("model"), py::arg("evaluator"), py::arg("bits") = std::vector<int>{},
        py::arg("mode") = QuantMode::Faithful);
    m.def(
        "guided_explore",
        [](const NetworkModel& model, const std::function<double(const NetworkModel&)>& ev,
           const std::map<int, int>& high, const std::map<int, int>& low, double delta,
           QuantMode mode) {
            BaseSettings base{high, low};
            const GuidedResult r =
                guided_explore(model, ev, base, ThresholdPolicy{delta}, mode, 1);
            return py::make_tuple(r.spec.assignment, r.baseline_accuracy);
        },
        py::arg("model"), py::arg("evaluator"), py::arg("high"), py::arg("low"),
        py::arg("delta") = 5.0, py::arg("mode") = QuantMode::Faithful);
    m.def(
        "explore_composite",
        [](const NetworkModel& model, const std::function<double(const NetworkModel&)>& ev,
           const std::map<int, int>& high, const std::map<int, int>& low, double delta,
           QuantMode mode) {
            BaseSettings base{high, low};
            const CompositeResult r =
                explore_composite(model, ev, base, ThresholdPolicy{delta}, {}, mode, 1);
            py::list ranked;
            for (const auto& c : r.ranked) {
                py::dict d;
                d["name"] = c.name;
                d["accuracy"] = c.accuracy;
                d["footprint_bytes"] = c.footprint_bytes;
                d["qualifies"] = c.qualifies;
                d["assignment"] = c.spec.assignment;
                ranked.append(std::move(d));
            }
            return py::make_tuple(r.selected.assignment, r.selected_accuracy, ranked);
        },
        py::arg("model"), py::arg("evaluator"), py::arg("high"), py::arg("low"),
        py::arg("delta") = 5.0, py::arg("mode") = QuantMode::Faithful);
    m.def(
        "build_quantized",
        [](const NetworkModel& model, const std::map<int, int>& assignment,
           const std::function<double(const NetworkModel&)>& ev, double delta, QuantMode mode) {
            QuantSpec spec;
            spec.assignment = assignment;
            spec.provenance = "manual";
            const BuildResult r =
                build_quantized(model, spec, ev, ThresholdPolicy{delta}, mode);
            return py::make_tuple(r.model, r.accuracy, r.below_threshold);
        },
        py::arg("model"), py::arg("assignment"), py::arg("evaluator"), py::arg("delta") = 5.0,
        py::arg("mode") = QuantMode::Faithful);
}
