#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cupnet/bench.hpp"
#include "cupnet/config.hpp"
#include "cupnet/geometry.hpp"
#include "cupnet/network.hpp"
#include "cupnet/synthcup.hpp"
#include "cupnet/training.hpp"

namespace py = pybind11;
using namespace cupnet;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Mesh to_mesh(const Points& p) {
    std::vector<Point3> pts(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) pts[static_cast<std::size_t>(i)] = {p(i, 0), p(i, 1), p(i, 2)};
    return Mesh(std::move(pts));
}

Points from_mesh(const Mesh& mesh) {
    Points p(static_cast<Eigen::Index>(mesh.size()), 3);
    for (std::size_t i = 0; i < mesh.size(); ++i) p.row(static_cast<Eigen::Index>(i)) << mesh[i][0], mesh[i][1], mesh[i][2];
    return p;
}

GeneratorConfig generator_config(const py::object& overrides) {
    if (overrides.is_none()) return GeneratorConfig{};
    const auto text = py::module_::import("json").attr("dumps")(overrides).cast<std::string>();
    return generator_config_from_json(nlohmann::json::parse(text));
}

std::shared_ptr<const PruneMask> mask_for(const Points& points, double alpha) {
    return std::make_shared<const PruneMask>(build_mask(pairwise_distances(to_mesh(points)), alpha));
}

std::vector<CupClass> labels_from(const std::vector<std::string>& names) {
    std::vector<CupClass> labels;
    for (const auto& n : names) labels.push_back(cup_class_from_string(n));
    return labels;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Pruned segment networks for cup-drawing mesh regression.";

    m.def("param_count_cup", &param_count_cup, py::arg("k"), py::arg("d"), py::arg("m"), py::arg("h"), py::arg("c_alpha"));
    m.def("param_count_ref", &param_count_ref, py::arg("k"), py::arg("d"), py::arg("h"), py::arg("s"));
    m.def("solve_s", &solve_s, py::arg("k"), py::arg("d"), py::arg("h"), py::arg("n_cup"));

    m.def("generate_base_mesh", [](int radial, int angular, double radius) { return from_mesh(generate_base_mesh(radial, angular, radius)); },
          py::arg("radial_count") = 21, py::arg("angular_count") = 10, py::arg("outer_radius") = 50.0);
    m.def("pairwise_distances", [](const Points& p) {
        const auto D = pairwise_distances(to_mesh(p));
        Matrix out(static_cast<Eigen::Index>(D.size()), static_cast<Eigen::Index>(D.size()));
        for (std::size_t i = 0; i < D.size(); ++i)
            for (std::size_t j = 0; j < D.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = D(i, j);
        return out;
    });
    m.def("mask_count", [](const Points& p, double alpha) { return mask_count(*mask_for(p, alpha)); }, py::arg("points"), py::arg("alpha"));
    m.def("mask_nonzeros", [](const Points& p, double alpha) {
        const auto mask = mask_for(p, alpha);
        std::vector<std::pair<std::size_t, std::size_t>> nz;
        for (std::size_t i = 0; i < mask->size(); ++i)
            for (auto j : mask->row(i)) nz.emplace_back(i, j);
        return nz;
    }, py::arg("points"), py::arg("alpha"));

    m.def("sample_dataset", [](std::size_t n, std::uint64_t seed, const py::object& config) {
        const auto ds = sample_dataset(generator_config(config), n, seed);
        std::vector<std::size_t> all(ds.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        auto [x, y] = gather(ds, all);
        std::vector<std::string> labels;
        for (const auto& s : ds.samples) labels.emplace_back(to_string(s.label));
        py::dict out;
        out["params"] = x;
        out["coords"] = y;
        out["labels"] = labels;
        out["base_mesh"] = from_mesh(ds.base_mesh);
        return out;
    }, py::arg("n"), py::arg("seed") = 0, py::arg("config") = py::none());

    m.def("stratified_split", [](const std::vector<std::string>& labels, double tf, std::uint64_t seed) {
        const auto s = stratified_split(labels_from(labels), tf, seed);
        return std::make_pair(s.train, s.test);
    }, py::arg("labels"), py::arg("test_fraction"), py::arg("seed"));
    m.def("r2_score", &r2_score, py::arg("pred"), py::arg("target"));

    py::class_<Network>(m, "Network")
        .def_property_readonly("kind", [](const Network& n) { return std::string(to_string(n.kind())); })
        .def_property_readonly("parameter_count", &Network::parameter_count)
        .def_property_readonly("input_size", &Network::input_size)
        .def_property_readonly("output_size", &Network::output_size)
        .def("params", [](const Network& n) { return std::vector<double>(n.params().begin(), n.params().end()); })
        .def("forward", [](const Network& n, const Matrix& x) { return forward_batch(n, x); }, py::arg("inputs"))
        .def("train", [](Network& n, const Matrix& x, const Matrix& y, std::size_t epochs, std::size_t batch_size, double lr, std::uint64_t seed) {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.learning_rate = lr;
            cfg.seed = seed;
            cfg.dropout_rate = n.config().dropout_rate;
            py::gil_scoped_release release;
            return train(n, TrainData{x, y, {}, {}}, cfg).train_loss;
        }, py::arg("inputs"), py::arg("targets"), py::arg("epochs"), py::arg("batch_size") = 32, py::arg("learning_rate") = 1e-3, py::arg("seed") = 0)
        .def("save", [](const Network& n, const std::string& dir, std::uint64_t seed) { save_checkpoint(dir, n, seed); }, py::arg("dir"), py::arg("init_seed") = 0);

    m.def("build_cupnet", [](const Points& mesh, std::size_t k, std::size_t h, double alpha, std::uint64_t seed, double dropout) {
        ArchConfig cfg;
        cfg.k = k;
        cfg.m = static_cast<std::size_t>(mesh.rows());
        cfg.h = h;
        cfg.alpha = alpha;
        cfg.dropout_rate = dropout;
        return build_cupnet(cfg, mask_for(mesh, alpha), seed);
    }, py::arg("mesh"), py::arg("k"), py::arg("h"), py::arg("alpha"), py::arg("seed") = 0, py::arg("dropout_rate") = 0.2);
    m.def("build_regnet", [](std::size_t k, std::size_t m_points, std::size_t h, std::size_t s, std::uint64_t seed, double dropout) {
        ArchConfig cfg;
        cfg.k = k;
        cfg.m = m_points;
        cfg.h = h;
        cfg.s = s;
        cfg.dropout_rate = dropout;
        return build_regnet(cfg, seed);
    }, py::arg("k"), py::arg("m"), py::arg("h"), py::arg("s"), py::arg("seed") = 0, py::arg("dropout_rate") = 0.2);
    m.def("load_checkpoint", [](const std::string& dir) { return load_checkpoint(dir); }, py::arg("dir"));
}
