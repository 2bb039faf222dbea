#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "kfan/config.hpp"
#include "kfan/data.hpp"
#include "kfan/error.hpp"
#include "kfan/finetune.hpp"
#include "kfan/kfan_network.hpp"
#include "kfan/metrics.hpp"
#include "kfan/pipeline.hpp"

namespace py = pybind11;

PYBIND11_MODULE(_kfan, m) {
    m.doc() = "K-fan multimodal network: training pipeline and evaluation";

    // Error hierarchy mirrors the C++ taxonomy so callers can catch
    // narrowly. Subclasses must be registered after the base.
    static py::exception<kfan::Error> base(m, "KfanError");
    static py::exception<kfan::DimensionError> dim(m, "DimensionError", base.ptr());
    static py::exception<kfan::DomainError> dom(m, "DomainError", base.ptr());
    static py::exception<kfan::NumericError> num(m, "NumericError", base.ptr());
    static py::exception<kfan::FormatError> fmt(m, "FormatError", base.ptr());
    static py::exception<kfan::BudgetError> budget(m, "BudgetError", base.ptr());
    static py::exception<kfan::ParseError> parse(m, "ParseError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        if (!p) return;
        try {
            std::rethrow_exception(p);
        } catch (const kfan::DimensionError& e) {
            py::set_error(dim, e.what());
        } catch (const kfan::DomainError& e) {
            py::set_error(dom, e.what());
        } catch (const kfan::NumericError& e) {
            py::set_error(num, e.what());
        } catch (const kfan::FormatError& e) {
            py::set_error(fmt, e.what());
        } catch (const kfan::BudgetError& e) {
            py::set_error(budget, e.what());
        } catch (const kfan::ParseError& e) {
            py::set_error(parse, e.what());
        } catch (const kfan::Error& e) {
            py::set_error(base, e.what());
        }
    });

    py::class_<kfan::RunConfig>(m, "RunConfig")
        .def_readonly("seed", &kfan::RunConfig::seed)
        .def_readonly("shared_dim", &kfan::RunConfig::shared_dim)
        .def_property_readonly("task", [](const kfan::RunConfig& c) {
            return c.task == kfan::Task::restore_label ? "restore-label"
                                                       : "multiview";
        });

    py::class_<kfan::TripletDataset>(m, "TripletDataset")
        .def_readonly("x", &kfan::TripletDataset::x)
        .def_readonly("y", &kfan::TripletDataset::y)
        .def_readonly("z", &kfan::TripletDataset::z)
        .def_property_readonly("count", &kfan::TripletDataset::count)
        .def("class_indices", &kfan::TripletDataset::class_indices);

    py::class_<kfan::Datasets>(m, "Datasets")
        .def_readonly("train", &kfan::Datasets::train)
        .def_readonly("test", &kfan::Datasets::test)
        .def_readonly("height", &kfan::Datasets::height)
        .def_readonly("width", &kfan::Datasets::width);

    py::class_<kfan::KFanNetwork>(m, "KFanNetwork")
        .def_property_readonly("parameter_count", &kfan::KFanNetwork::parameter_count)
        .def_property_readonly("shared_dim", &kfan::KFanNetwork::shared_dim)
        .def_property_readonly("branch_names", [](const kfan::KFanNetwork& net) {
            std::vector<std::string> names;
            for (const auto& br : net.branches) names.push_back(br.spec.name);
            return names;
        });

    py::class_<kfan::EvalReport>(m, "EvalReport")
        .def_readonly("psnr_db", &kfan::EvalReport::psnr_db)
        .def_readonly("psnr_noisy_db", &kfan::EvalReport::psnr_noisy_db)
        .def_readonly("error_rate", &kfan::EvalReport::error_rate)
        .def_readonly("per_class_errors", &kfan::EvalReport::per_class_errors)
        .def_readonly("n_examples", &kfan::EvalReport::n_examples);

    m.def("parse_config", &kfan::parse_config, py::arg("text"));
    m.def("serialize_config", &kfan::serialize_config, py::arg("config"));

    m.def("assemble_datasets", &kfan::assemble_datasets, py::arg("config"),
          py::arg("data_dir") = std::filesystem::path());
    m.def("run_pretrain", &kfan::run_pretrain, py::arg("config"), py::arg("data"));
    m.def("run_finetune", &kfan::run_finetune, py::arg("config"), py::arg("data"),
          py::arg("net"));
    m.def("evaluate", &kfan::evaluate, py::arg("config"), py::arg("data"),
          py::arg("net"));
    m.def("denoise_all", &kfan::denoise_all, py::arg("config"), py::arg("data"),
          py::arg("net"));
    m.def("classify_all", &kfan::classify_all, py::arg("config"), py::arg("data"),
          py::arg("net"));

    m.def("save_checkpoint", &kfan::save_checkpoint, py::arg("net"), py::arg("path"));
    m.def("load_checkpoint", &kfan::load_checkpoint, py::arg("path"));
    m.def(
        "parameters",
        [](const kfan::KFanNetwork& net) { return kfan::flatten(net).values; },
        py::arg("net"), "Flat parameter vector in checkpoint order.");

    m.def(
        "forward_restore",
        [](const kfan::KFanNetwork& net, const kfan::Matrix& v_x) {
            return kfan::forward_restore(net, v_x);
        },
        py::arg("net"), py::arg("v_x"),
        "Per-row (restored image, label probabilities) predictions.");
    m.def(
        "forward_multiview",
        [](const kfan::KFanNetwork& net, const kfan::Matrix& v_x,
           const kfan::Matrix& v_y) { return kfan::forward_multiview(net, v_x, v_y); },
        py::arg("net"), py::arg("v_x"), py::arg("v_y"),
        "Per-row label probabilities from two fused inputs.");

    m.def("psnr", &kfan::psnr, py::arg("reference"), py::arg("test"),
          py::arg("max_value") = 1.0);
    m.def("error_rate", &kfan::error_rate, py::arg("predicted"), py::arg("truth"));
    m.def("report_text", &kfan::report_text, py::arg("report"));
}
