#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hyperskel/model.hpp"

namespace py = pybind11;
using namespace hyperskel;

namespace {

Tensor tensor_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<int>(a.shape(i));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor::from_data(std::move(shape), std::move(data));
}

py::array_t<double> array_from(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "hypergraph transformer core operations";

    m.def(
        "hyperconv",
        [](py::array_t<double> x, py::array_t<double> incidence,
           py::array_t<double> weights, py::array_t<double> theta) {
            Tensor inc = tensor_from(incidence);
            if (inc.shape().size() != 2)
                throw std::invalid_argument("incidence must be 2-d");
            Tensor w = tensor_from(weights);
            return array_from(hyperconv_weighted(tensor_from(x), inc, w, tensor_from(theta)));
        },
        py::arg("x"), py::arg("incidence"), py::arg("weights"), py::arg("theta"),
        "normalized hypergraph convolution Dv^-1/2 H W De^-1 H^T Dv^-1/2 x theta");

    m.def(
        "adjacency_conv",
        [](py::array_t<double> x, py::array_t<double> adj, py::array_t<double> w,
           bool add_self_loops) {
            return array_from(
                adjacency_conv(tensor_from(x), tensor_from(adj), tensor_from(w), add_self_loops));
        },
        py::arg("x"), py::arg("adj"), py::arg("w"), py::arg("add_self_loops") = true);

    m.def(
        "softmax_rows",
        [](py::array_t<double> x) { return array_from(softmax_rows(tensor_from(x))); },
        py::arg("x"));

    m.def(
        "gelu", [](py::array_t<double> x) { return array_from(gelu(tensor_from(x))); },
        py::arg("x"));

    m.def(
        "assign_codebook",
        [](py::array_t<double> e, py::array_t<double> codebook) {
            return assign(tensor_from(e), tensor_from(codebook));
        },
        py::arg("e"), py::arg("codebook"),
        "nearest prototype per row, ties to the lowest index");

    m.def(
        "kmeans",
        [](py::array_t<double> points, int k, std::uint64_t seed, int max_iter,
           double tol) {
            KMeansResult r = kmeans(tensor_from(points), k, seed, max_iter, tol);
            return py::make_tuple(r.assignments, array_from(r.centroids), r.inertia);
        },
        py::arg("points"), py::arg("k"), py::arg("seed"), py::arg("max_iter") = 50,
        py::arg("tol") = 1e-8, "returns (assignments, centroids, inertia)");

    m.def(
        "generate_hypergraph",
        [](const std::vector<py::array_t<double>>& e_c,
           const std::vector<py::array_t<double>>& attn, int k, std::uint64_t seed) {
            std::vector<Tensor> ecs, ats;
            for (const auto& a : e_c) ecs.push_back(tensor_from(a));
            for (const auto& a : attn) ats.push_back(tensor_from(a));
            Hypergraph h = generate_outphase(ecs, ats, k, seed);
            py::array_t<double> inc({h.v, h.e});
            std::copy(h.incidence.begin(), h.incidence.end(), inc.mutable_data());
            return py::make_tuple(inc, h.weights);
        },
        py::arg("e_c"), py::arg("attn"), py::arg("k"), py::arg("seed"),
        "k-means hyperedges over batch-pooled features; returns (incidence, weights)");

    m.def(
        "default_config",
        []() { return serialize_config(RunConfig{}); },
        "the published training recipe as a JSON string");

    m.def(
        "train",
        [](const std::string& config_json) {
            RunConfig cfg = parse_config(config_json);
            ModelState state = init_model(cfg);
            auto [train_seqs, val_seqs] = load_dataset(cfg);
            std::ostringstream csv;
            auto rows = run_training(state, train_seqs, val_seqs, &csv, "");
            py::dict out;
            out["epochs"] = rows.size();
            out["metrics_csv"] = csv.str();
            if (!rows.empty()) {
                out["final_total"] = rows.back().total;
                out["final_train_acc"] = rows.back().train_acc;
                out["final_val_acc"] = rows.back().val_acc;
            }
            return out;
        },
        py::arg("config_json"),
        "full training loop on the configured dataset; returns summary metrics");

    m.def(
        "gradcheck",
        [](const std::string& config_json) {
            RunConfig cfg = parse_config(config_json);
            ModelState state = init_model(cfg);
            auto [train_seqs, val_seqs] = load_dataset(cfg);
            std::vector<SkeletonSequence> toy;
            for (const auto& s : train_seqs) {
                if (toy.empty() || s.label != toy[0].label) toy.push_back(s);
                if (toy.size() == 2) break;
            }
            if (toy.size() < 2)
                throw std::invalid_argument("gradcheck: need two samples");
            auto batches = make_batches(toy, 2, cfg.data.t_target, 0, false);
            std::vector<std::pair<std::string, double>> out;
            for (const auto& r : gradcheck_model(batches[0], state))
                out.emplace_back(r.group, r.rel_err);
            return out;
        },
        py::arg("config_json"),
        "per-group max relative error of analytic vs central-difference gradients");

    m.def(
        "synth_batch",
        [](int n_classes, int per_class, int v, int t_raw, int t_target,
           std::uint64_t seed) {
            auto seqs = synth_generate(n_classes, per_class, v, t_raw, seed, 0.02);
            auto batches = make_batches(seqs, static_cast<int>(seqs.size()), t_target,
                                        0, false);
            const SkeletonBatch& b = batches[0];
            py::array_t<double> x({b.n, b.m, b.v, b.t, b.c});
            std::copy(b.x.begin(), b.x.end(), x.mutable_data());
            return py::make_tuple(x, b.labels);
        },
        py::arg("n_classes"), py::arg("per_class"), py::arg("v"), py::arg("t_raw"),
        py::arg("t_target"), py::arg("seed"),
        "synthetic skeleton batch as (n,m,v,t,c) array plus labels");
}
