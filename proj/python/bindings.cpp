#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>

#include "v2v/codec.hpp"
#include "v2v/flow.hpp"
#include "v2v/image_io.hpp"
#include "v2v/pipeline.hpp"
#include "v2v/synthetic.hpp"

namespace py = pybind11;
using namespace v2v;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W, C) or (H, W) arrays to planar tensors and back.
Tensor to_tensor(const Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected an (H, W) or (H, W, C) array");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    Tensor t(c, h, w);
    const double* p = a.data();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int k = 0; k < c; ++k) t.at(k, y, x) = p[(static_cast<std::size_t>(y) * w + x) * c + k];
    return t;
}

Array to_array(const Tensor& t) {
    Array a(std::vector<py::ssize_t>{t.height(), t.width(), t.channels()});
    double* p = a.mutable_data();
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x)
            for (int k = 0; k < t.channels(); ++k)
                p[(static_cast<std::size_t>(y) * t.width() + x) * t.channels() + k] = t.at(k, y, x);
    return a;
}

std::vector<Frame> to_frames(const std::vector<Array>& arrays) {
    std::vector<Frame> frames;
    frames.reserve(arrays.size());
    for (const auto& a : arrays) frames.push_back(to_tensor(a));
    return frames;
}

FlowField to_flow(const Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 2) throw ShapeError("expected an (H, W, 2) flow array");
    const Tensor t = to_tensor(a);
    FlowField f(t.width(), t.height());
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x) {
            f.dx(x, y) = t.at(0, y, x);
            f.dy(x, y) = t.at(1, y, x);
        }
    return f;
}

Array flow_array(const FlowField& f) {
    Tensor t(2, f.height(), f.width());
    for (int y = 0; y < f.height(); ++y)
        for (int x = 0; x < f.width(); ++x) {
            t.at(0, y, x) = f.at(x, y).dx;
            t.at(1, y, x) = f.at(x, y).dy;
        }
    return to_array(t);
}

PipelineConfig make_config(const py::dict& overrides) {
    PipelineConfig cfg;
    for (const auto& [key, value] : overrides) {
        std::string text;
        if (py::isinstance<py::bool_>(value)) text = value.cast<bool>() ? "true" : "false";
        else text = py::str(value).cast<std::string>();
        set_config_value(cfg, key.cast<std::string>(), text);
    }
    cfg.validate();
    return cfg;
}

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Key: return "key";
        case Provenance::Blend: return "blend";
        case Provenance::Single: return "single";
    }
    return "?";
}

}  // namespace

PYBIND11_MODULE(_v2v, m) {
    m.doc() = "Zero-shot video-to-video translation engine";
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<FrameError>(m, "FrameError", PyExc_RuntimeError);

    m.def("default_config", [] {
        py::dict out;
        std::istringstream in(format_config(PipelineConfig{}));
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) out[py::str(line.substr(0, eq))] = line.substr(eq + 1);
        }
        return out;
    }, "Default configuration as a {key: value-string} dict.");

    m.def("translate", [](const std::vector<Array>& frames, const std::string& prompt, const py::dict& config) {
        VideoJob job{to_frames(frames), prompt, make_config(config)};
        PipelineResult r;
        {
            py::gil_scoped_release release;
            r = run(job);
        }
        py::list out, prov;
        for (const Frame& f : r.frames) out.append(to_array(f));
        for (Provenance p : r.provenance) prov.append(provenance_name(p));
        py::dict result;
        result["frames"] = out;
        result["keys"] = r.keys;
        result["provenance"] = prov;
        result["pixel_mse"] = r.metrics.pixel_mse;
        result["per_frame_mse"] = r.metrics.per_frame;
        return result;
    }, py::arg("frames"), py::arg("prompt") = "a watercolor painting", py::arg("config") = py::dict(),
       "Translates a list of (H, W, 3) frames in [0, 1]. config maps config keys to values.");

    m.def("estimate_flow", [](const Array& src, const Array& dst, int levels) {
        FlowOptions opt;
        opt.levels = levels;
        return flow_array(estimate_flow(to_tensor(src), to_tensor(dst), opt));
    }, py::arg("src"), py::arg("dst"), py::arg("levels") = 3,
       "Flow on dst pointing into src, as an (H, W, 2) array of (dx, dy).");

    m.def("occlusion_mask", [](const Array& fwd, const Array& bwd, double absolute, double relative) {
        const OcclusionMask mask = occlusion_mask(to_flow(fwd), to_flow(bwd), ConsistencyThreshold{absolute, relative});
        py::array_t<bool> out(std::vector<py::ssize_t>{mask.height(), mask.width()});
        bool* p = out.mutable_data();
        for (int y = 0; y < mask.height(); ++y)
            for (int x = 0; x < mask.width(); ++x) p[static_cast<std::size_t>(y) * mask.width() + x] = mask.at(x, y) != 0;
        return out;
    }, py::arg("forward"), py::arg("backward"), py::arg("absolute") = 1.0, py::arg("relative") = 0.01,
       "True where the forward/backward flows are consistent.");

    m.def("warp", [](const Array& image, const Array& flow) { return to_array(warp(to_tensor(image), to_flow(flow))); },
          py::arg("image"), py::arg("flow"), "Backward bilinear warp: out(p) = image(p + flow(p)).");

    m.def("roundtrip_error_curve", [](const Array& image, int iterations, bool fidelity) {
        return roundtrip_error_curve(ToyLossyCodec{}, to_tensor(image), iterations, fidelity);
    }, py::arg("image"), py::arg("iterations") = 10, py::arg("fidelity") = true,
       "MSE after each encode/decode round trip through the toy codec.");

    m.def("pixel_mse", [](const std::vector<Array>& outputs, const std::vector<Array>& inputs, const py::dict& config) {
        const PipelineConfig cfg = make_config(config);
        const std::vector<Frame> in = to_frames(inputs);
        if (in.size() != outputs.size()) throw std::invalid_argument("input and output clips differ in length");
        return pixel_mse(to_frames(outputs), build_flow_chain(in, cfg)).pixel_mse;
    }, py::arg("outputs"), py::arg("inputs"), py::arg("config") = py::dict(),
       "Pixel-MSE of outputs under flows estimated on inputs.");

    m.def("key_frame_indices", &key_frame_indices, py::arg("frame_count"), py::arg("key_interval"));

    m.def("synthetic_video", [](int frames, int height, int width, double vx, double vy, std::uint64_t seed) {
        py::list out;
        for (const Frame& f : synthetic::translating_video(frames, height, width, vx, vy, seed)) out.append(to_array(f));
        return out;
    }, py::arg("frames"), py::arg("height"), py::arg("width"), py::arg("vx") = 1.0, py::arg("vy") = 0.5,
       py::arg("seed") = 11, "A procedural texture panning by (vx, vy) pixels per frame.");
}
