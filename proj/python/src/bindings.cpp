#include "embedsom/core.hpp"
#include "embedsom/demo_data.hpp"
#include "embedsom/graphmodel.hpp"
#include "embedsom/io.hpp"
#include "embedsom/knn.hpp"
#include "embedsom/projection.hpp"
#include "embedsom/protocol.hpp"
#include "embedsom/rng.hpp"
#include "embedsom/som.hpp"
#include "embedsom/bench.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

namespace py = pybind11;
using namespace embedsom;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix<float> to_matrix(const FloatArray &a, const char *what) {
    if (a.ndim() != 2)
        throw Error(ErrorKind::Parameter, "shape_mismatch", std::string(what) + " must be a 2D array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    std::vector<float> data(a.data(), a.data() + rows * cols);
    return Matrix<float>(rows, cols, std::move(data));
}

template <typename T>
py::array_t<T> to_array(const Matrix<T> &m) {
    py::array_t<T> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
    std::memcpy(out.mutable_data(), m.data().data(), m.data().size() * sizeof(T));
    return out;
}

py::tuple neighbors_tuple(const NeighborList &nl) { return py::make_tuple(to_array(nl.indices), to_array(nl.sqdists)); }

py::tuple dataset_tuple(const Dataset &d) { return py::make_tuple(to_array(d.points()), d.dim_names()); }

LandmarkModel model_from(const FloatArray &hi, const FloatArray &lo) {
    return LandmarkModel(to_matrix(hi, "hi"), to_matrix(lo, "lo"));
}

py::dict message_dict(const proto::Message &m) {
    py::dict out;
    out["tag"] = static_cast<int>(proto::tag_of(m));
    std::visit(
        [&](const auto &v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, proto::FramePoints>) {
                out["type"] = "FramePoints";
                out["frame_id"] = v.frame_id;
                py::array_t<float> pos({static_cast<py::ssize_t>(v.colors.size()), py::ssize_t{2}});
                std::memcpy(pos.mutable_data(), v.positions.data(), v.positions.size() * sizeof(float));
                out["positions"] = pos;
                out["colors"] = py::bytes(reinterpret_cast<const char *>(v.colors.data()), v.colors.size());
            } else if constexpr (std::is_same_v<T, proto::FrameLandmarks>) {
                out["type"] = "FrameLandmarks";
                py::array_t<float> lo({static_cast<py::ssize_t>(v.lo.size() / 2), py::ssize_t{2}});
                std::memcpy(lo.mutable_data(), v.lo.data(), v.lo.size() * sizeof(float));
                out["landmarks"] = lo;
                out["edges"] = v.edges;
            } else if constexpr (std::is_same_v<T, proto::ErrorMessage>) {
                out["type"] = "Error";
                out["code"] = v.code;
                out["detail"] = v.detail;
            } else {
                out["type"] = "Control";
            }
        },
        m);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "embedsom core kernels";
    m.attr("__version__") = "0.1.0";
    m.attr("PROTOCOL_VERSION") = proto::kProtocolVersion;
    m.attr("BENCH_HEADER") = kBenchHeader;

    static py::object error_type = py::exception<Error>(m, "EmbedsomError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p)
                std::rethrow_exception(p);
        } catch (const Error &e) {
            py::object inst = error_type(std::string(e.code()) + ": " + e.what());
            inst.attr("code") = e.code();
            PyErr_SetObject(error_type.ptr(), inst.ptr());
        }
    });

    // k-NN
    m.def(
        "knn_base",
        [](const FloatArray &points, const FloatArray &landmarks, std::size_t k) {
            return neighbors_tuple(knn_base(to_matrix(points, "points"), to_matrix(landmarks, "landmarks"), k));
        },
        py::arg("points"), py::arg("landmarks"), py::arg("k"),
        "Reference k nearest landmarks: (indices uint32 n x k, squared distances float32 n x k).");
    m.def(
        "knn_bitonic",
        [](const FloatArray &points, const FloatArray &landmarks, std::size_t k) {
            return neighbors_tuple(knn_bitonic(to_matrix(points, "points"), to_matrix(landmarks, "landmarks"), k));
        },
        py::arg("points"), py::arg("landmarks"), py::arg("k"));

    // projection
    m.def(
        "scores",
        [](const FloatArray &sqdists) {
            std::vector<float> v(sqdists.data(), sqdists.data() + sqdists.size());
            return scores(v);
        },
        py::arg("sqdists"));
    m.def(
        "project_point",
        [](const FloatArray &point, const FloatArray &hi, const FloatArray &lo, const IndexArray &neighbors,
           const DoubleArray &sc) {
            const LandmarkModel model = model_from(hi, lo);
            const auto p = project_point({point.data(), static_cast<std::size_t>(point.size())}, model,
                                         {neighbors.data(), static_cast<std::size_t>(neighbors.size())},
                                         {sc.data(), static_cast<std::size_t>(sc.size())});
            return py::make_tuple(p[0], p[1]);
        },
        py::arg("point"), py::arg("hi"), py::arg("lo"), py::arg("neighbors"), py::arg("scores"));
    m.def(
        "embed",
        [](const FloatArray &points, const FloatArray &hi, const FloatArray &lo, std::size_t k,
           const std::string &backend, std::size_t workers) {
            const LandmarkModel model = model_from(hi, lo);
            const Matrix<float> pts = to_matrix(points, "points");
            Matrix<float> out;
            {
                py::gil_scoped_release release;
                out = embed(pts, model, EmbedParams{k}, parse_backend(backend), EmbedOptions{workers, 4096});
            }
            return to_array(out);
        },
        py::arg("points"), py::arg("hi"), py::arg("lo"), py::arg("k") = 16, py::arg("backend") = "bitonic",
        py::arg("workers") = 1, "Fused k-NN, scoring and projection: n x 2 float32 positions.");

    // trainers
    m.def(
        "som_tick",
        [](const FloatArray &data, const FloatArray &hi, const FloatArray &lo, double sigma, double alpha,
           std::size_t batch_size, std::uint64_t seed) {
            Matrix<float> h = to_matrix(hi, "hi");
            Rng rng(seed);
            som_tick(to_matrix(data, "data"), to_matrix(lo, "lo"), h.view(), SomConfig{sigma, alpha, batch_size}, rng);
            return to_array(h);
        },
        py::arg("data"), py::arg("hi"), py::arg("lo"), py::arg("sigma"), py::arg("alpha"), py::arg("batch_size") = 256,
        py::arg("seed") = 0, "One SOM tick; returns the updated hi matrix.");
    m.def(
        "kmeans_tick",
        [](const FloatArray &data, const FloatArray &hi, double alpha, std::size_t batch_size, std::uint64_t seed) {
            Matrix<float> h = to_matrix(hi, "hi");
            Rng rng(seed);
            kmeans_tick(to_matrix(data, "data"), h.view(), KmeansConfig{alpha, batch_size}, rng);
            return to_array(h);
        },
        py::arg("data"), py::arg("hi"), py::arg("alpha"), py::arg("batch_size") = 256, py::arg("seed") = 0);
    m.def(
        "quantization_error",
        [](const FloatArray &data, const FloatArray &hi) {
            return quantization_error(to_matrix(data, "data"), to_matrix(hi, "hi"));
        },
        py::arg("data"), py::arg("hi"));
    m.def(
        "build_knn_graph",
        [](const FloatArray &hi, std::size_t k_graph, double scale) {
            std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> out;
            for (const auto &e : build_knn_graph(to_matrix(hi, "hi"), k_graph, scale).edges)
                out.emplace_back(e.i, e.j, e.rest_length);
            return out;
        },
        py::arg("hi"), py::arg("k_graph"), py::arg("scale") = 1.0);

    // input
    m.def(
        "parse_fcs", [](const py::bytes &b) { return dataset_tuple(parse_fcs(std::string_view(b))); }, py::arg("data"),
        "Parse an FCS 3.x file: (float32 n x d array, dimension names).");
    m.def(
        "parse_delimited",
        [](const std::string &text, const std::string &delimiter, bool header) {
            if (delimiter.size() != 1)
                throw Error(ErrorKind::Parameter, "invalid_delimiter", "delimiter must be one character");
            return dataset_tuple(parse_delimited(text, delimiter[0], header));
        },
        py::arg("text"), py::arg("delimiter") = "\t", py::arg("header") = true);
    m.def(
        "parse_obj", [](const std::string &text) { return dataset_tuple(parse_obj_vertices(text)); }, py::arg("text"));

    // synthetic data
    m.def(
        "gaussians",
        [](std::size_t clusters, std::size_t n, std::size_t d, std::uint64_t seed, double sd, double spread) {
            auto ld = demo::gaussians(clusters, n, d, seed, sd, spread);
            return py::make_tuple(to_array(ld.data.points()), ld.labels);
        },
        py::arg("clusters"), py::arg("n"), py::arg("d"), py::arg("seed"), py::arg("sd") = 1.0,
        py::arg("center_spread") = 10.0);
    m.def(
        "extruded_s",
        [](std::size_t n, std::uint64_t seed, double noise) {
            return to_array(demo::extruded_s(n, seed, noise).data.points());
        },
        py::arg("n"), py::arg("seed"), py::arg("noise") = 0.0);
    m.def(
        "uniform", [](std::size_t n, std::size_t d, std::uint64_t seed) { return to_array(demo::uniform(n, d, seed).points()); },
        py::arg("n"), py::arg("d"), py::arg("seed"));

    // protocol
    m.def(
        "encode_frame_points",
        [](std::uint32_t frame_id, const FloatArray &positions, const py::bytes &colors) {
            proto::FramePoints fp;
            fp.frame_id = frame_id;
            fp.positions.assign(positions.data(), positions.data() + positions.size());
            const std::string c = colors;
            fp.colors.assign(c.begin(), c.end());
            if (fp.positions.size() != 2 * fp.colors.size())
                throw Error(ErrorKind::Parameter, "shape_mismatch", "positions must hold two floats per color byte");
            const auto bytes = proto::encode(fp);
            return py::bytes(reinterpret_cast<const char *>(bytes.data()), bytes.size());
        },
        py::arg("frame_id"), py::arg("positions"), py::arg("colors"));
    m.def(
        "decode_message",
        [](const py::bytes &b) {
            const std::string s = b;
            return message_dict(proto::decode({reinterpret_cast<const std::uint8_t *>(s.data()), s.size()}));
        },
        py::arg("data"), "Decode one framed message into a dict (binary frames fully, control messages by tag).");
}
