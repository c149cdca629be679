#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "safer/safer.hpp"

namespace py = pybind11;
using namespace safer;

namespace {

EmbeddingMatrix embeddings(const Eigen::MatrixXd& values) {
    EmbeddingMatrix e;
    e.values = values;
    return e;
}

py::dict tensors_as_dict(const TensorStore& store) {
    py::dict tensors;
    for (const auto& t : store.tensors()) {
        if (!is_floating(t.dtype)) continue;
        const auto values = t.to_doubles();
        py::array_t<double> arr(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
        std::copy(values.begin(), values.end(), arr.mutable_data());
        tensors[py::str(t.name)] = arr;
    }
    return tensors;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the safer package";

    auto argument_error = py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
    (void)argument_error;

    py::class_<ConceptBasis>(m, "ConceptBasis")
        .def(py::init<>())
        .def_readwrite("basis", &ConceptBasis::basis)
        .def_readwrite("singular_values", &ConceptBasis::singular_values)
        .def_readwrite("explained_variance_ratio", &ConceptBasis::explained_variance_ratio)
        .def_readwrite("label", &ConceptBasis::label)
        .def_property_readonly("dim", &ConceptBasis::dim)
        .def_property_readonly("rank", &ConceptBasis::rank);

    py::class_<Projector>(m, "Projector")
        .def_readonly("matrix", &Projector::matrix)
        .def_property_readonly("mode", [](const Projector& p) { return std::string(mode_name(p.mode)); })
        .def_readonly("lambda_", &Projector::lambda)
        .def_readonly("sources", &Projector::sources)
        .def_property_readonly("dim", &Projector::dim)
        .def_static("identity", &Projector::identity, py::arg("dim"));

    m.def(
        "identify_subspace",
        [](const Eigen::MatrixXd& emb, int rank, bool center, const std::string& label) {
            return identify_subspace(embeddings(emb), rank, center, label);
        },
        py::arg("embeddings"), py::arg("rank") = 1, py::arg("center") = false, py::arg("label") = "");

    m.def("removal_projector", &removal_projector, py::arg("basis"));
    m.def("amplify_projector", &amplify_projector, py::arg("basis"), py::arg("lam") = 1.0,
          py::arg("allow_negative") = false);
    m.def(
        "compose", [](const std::vector<Projector>& ps) { return compose(ps); }, py::arg("projectors"));
    m.def(
        "orthogonalized_removal", [](const std::vector<ConceptBasis>& bs) { return orthogonalized_removal(bs); },
        py::arg("bases"));
    m.def(
        "apply", [](const Projector& p, const Eigen::MatrixXd& emb) { return apply(p, embeddings(emb)).values; },
        py::arg("projector"), py::arg("embeddings"));

    m.def(
        "generate",
        [](int d, int n, double sigma_alpha, double object_scale, double noise_scale, std::uint64_t seed) {
            SyntheticSpec spec{d, n, sigma_alpha, object_scale, noise_scale, seed, std::nullopt};
            auto s = generate(spec);
            return py::make_tuple(s.embeddings.values, s.v_c, s.alpha);
        },
        py::arg("d") = 64, py::arg("n") = 128, py::arg("sigma_alpha") = 1.0, py::arg("object_scale") = 0.1,
        py::arg("noise_scale") = 0.1, py::arg("seed") = 0);

    m.def(
        "style_similarity",
        [](const Eigen::MatrixXd& ref, const Eigen::MatrixXd& fake) {
            return style_similarity(FeatureSet{{}, ref}, FeatureSet{{}, fake});
        },
        py::arg("ref"), py::arg("fake"));

    m.def(
        "save_embeddings",
        [](const Eigen::MatrixXd& emb, const std::string& path, const std::string& label) {
            save_store(embeddings_to_store(embeddings(emb), label), path);
        },
        py::arg("embeddings"), py::arg("path"), py::arg("label") = "");
    m.def(
        "load_embeddings", [](const std::string& path) { return embeddings_from_store(load_store(path)).values; },
        py::arg("path"));
    m.def(
        "save_basis", [](const ConceptBasis& b, const std::string& path) { save_store(basis_to_store(b), path); },
        py::arg("basis"), py::arg("path"));
    m.def(
        "load_basis", [](const std::string& path) { return basis_from_store(load_store(path)); }, py::arg("path"));
    m.def(
        "save_projector", [](const Projector& p, const std::string& path) { save_store(projector_to_store(p), path); },
        py::arg("projector"), py::arg("path"));
    m.def(
        "load_projector", [](const std::string& path) { return projector_from_store(load_store(path)); },
        py::arg("path"));
    m.def(
        "read_tensors",
        [](const std::string& path) {
            const auto store = load_store(path);
            return py::make_tuple(tensors_as_dict(store), store.metadata());
        },
        py::arg("path"), "Float tensors as float64 arrays, plus the metadata map.");

    m.def(
        "patch_file",
        [](const std::string& checkpoint, const Projector& proj, const std::string& output, const std::string& selector,
           const std::string& orientation) {
            LayerSelector sel{selector, proj.dim(), parse_orientation(orientation)};
            auto result = patch_checkpoint(load_store(checkpoint), proj, sel);
            save_store(result.checkpoint, output, {.allow_nonfinite = true});
            return result.report.to_text();
        },
        py::arg("checkpoint"), py::arg("projector"), py::arg("output"),
        py::arg("selector") = std::string(kCrossAttentionKV), py::arg("orientation") = "auto");
    m.def(
        "verify_file",
        [](const std::string& original, const std::string& patched, const Projector& proj, const std::string& selector,
           const std::string& orientation, int trials, std::uint64_t seed) {
            LayerSelector sel{selector, proj.dim(), parse_orientation(orientation)};
            const auto report = verify_patch(load_store(original), load_store(patched), proj, sel, trials, seed);
            std::vector<std::string> failed;
            for (const auto& f : report.failures) failed.push_back(f.name);
            return py::make_tuple(report.ok(), report.worst_error, failed);
        },
        py::arg("original"), py::arg("patched"), py::arg("projector"),
        py::arg("selector") = std::string(kCrossAttentionKV), py::arg("orientation") = "auto", py::arg("trials") = 100,
        py::arg("seed") = 0);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs one command-line invocation; returns (exit code, stdout, stderr).");
}
