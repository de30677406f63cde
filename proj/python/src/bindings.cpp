// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/cli.hpp"
#include "mixsa/common.hpp"
#include "mixsa/config.hpp"
#include "mixsa/contour.hpp"
#include "mixsa/ddim.hpp"
#include "mixsa/metrics.hpp"
#include "mixsa/mixer.hpp"
#include "mixsa/pipeline.hpp"
#include "mixsa/rcd.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <memory>
#include <sstream>

namespace py = pybind11;
using namespace mixsa;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageBuffer image_from_array(const U8Array& arr) {
    int channels = 1;
    if (arr.ndim() == 3) {
        channels = static_cast<int>(arr.shape(2));
    } else if (arr.ndim() != 2) {
        throw Error(ErrorKind::invalid_argument, "image arrays must be HxW or HxWxC");
    }
    ImageBuffer img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)), channels);
    std::memcpy(img.pixels.data(), arr.data(), img.pixels.size());
    validate(img);
    return img;
}

py::array image_to_array(const ImageBuffer& img) {
    std::vector<py::ssize_t> shape{img.height, img.width};
    if (img.channels != 1) shape.push_back(img.channels);
    U8Array out(shape);
    std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
    return std::move(out);
}

LatentGrid latent_from_array(const F64Array& arr, int timestep = 0) {
    if (arr.ndim() != 3) throw Error(ErrorKind::dimension_mismatch, "latent arrays must be CxHxW");
    LatentGrid z(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                 static_cast<int>(arr.shape(2)), 0.0, timestep);
    std::memcpy(z.values.data(), arr.data(), z.values.size() * sizeof(double));
    return z;
}

py::array latent_to_array(const LatentGrid& z) {
    F64Array out({z.channels, z.height, z.width});
    std::memcpy(out.mutable_data(), z.values.data(), z.values.size() * sizeof(double));
    return std::move(out);
}

// Python values become the strings the parameter parser takes: booleans as
// on/off, sequences comma-joined.
std::string param_text(const py::handle& value) {
    if (py::isinstance<py::bool_>(value)) return value.cast<bool>() ? "on" : "off";
    if (py::isinstance<py::str>(value)) return value.cast<std::string>();
    if (py::isinstance<py::sequence>(value)) {
        std::string joined;
        for (auto item : value.cast<py::sequence>()) {
            if (!joined.empty()) joined += ',';
            joined += param_text(item);
        }
        return joined;
    }
    return py::str(value).cast<std::string>();
}

std::map<std::string, std::string> param_map(const py::dict& params) {
    std::map<std::string, std::string> out;
    for (auto [key, value] : params) out[key.cast<std::string>()] = param_text(value);
    return out;
}

MixParams mix_params(double zeta, double beta, bool decompose, int scale_d) {
    MixParams p;
    p.zeta = zeta;
    p.beta = beta;
    p.decompose_texture = decompose;
    p.scale_d = scale_d;
    return p;
}

BackendCapabilities make_capabilities(std::string id, int factor, int channels, int native_steps,
                                      bool guidance, const std::vector<std::pair<int, std::string>>& sites) {
    BackendCapabilities caps;
    caps.id = std::move(id);
    caps.downsample_factor = factor;
    caps.latent_channels = channels;
    caps.native_steps = native_steps;
    caps.supports_guidance = guidance;
    for (const auto& [index, stage] : sites) {
        Stage s = Stage::encoder;
        if (stage == "middle") s = Stage::middle;
        else if (stage == "decoder") s = Stage::decoder;
        else if (stage != "encoder") throw Error(ErrorKind::invalid_argument, "unknown stage: " + stage);
        caps.sites.push_back({index, s});
    }
    return caps;
}

py::dict capabilities_dict(const BackendCapabilities& caps) {
    py::dict d;
    d["id"] = caps.id;
    d["downsample_factor"] = caps.downsample_factor;
    d["latent_channels"] = caps.latent_channels;
    d["native_steps"] = caps.native_steps;
    d["supports_guidance"] = caps.supports_guidance;
    py::list sites;
    for (const auto& s : caps.sites) sites.append(py::make_tuple(s.index, std::string(to_string(s.stage))));
    d["sites"] = sites;
    return d;
}

// Handed to Python predict_noise implementations. Calling it for a
// self-attention site routes the projected tensors through the active
// controller; it stops working once the forward pass returns.
class AttentionHook {
public:
    AttentionHook(AttentionController* controller, int timestep) : controller_(controller), timestep_(timestep) {}

    py::list call(int site, const std::string& stage, const std::vector<Eigen::MatrixXd>& q,
                  const std::vector<Eigen::MatrixXd>& k, const std::vector<Eigen::MatrixXd>& v) {
        if (!live_) throw Error(ErrorKind::generation, "attention hook used after its forward pass");
        AttentionCall call{make_capabilities("", 1, 1, 1, false, {{site, stage}}).sites.front(), timestep_};
        AttentionTensors tensors{q, k, v};
        HeadMatrices out;
        {
            py::gil_scoped_release release;
            out = run_attention_site(call, tensors, controller_);
        }
        py::list heads;
        for (auto& h : out) heads.append(py::cast(std::move(h)));
        ++calls_;
        return heads;
    }

    bool active() const { return controller_ != nullptr; }
    int timestep() const { return timestep_; }
    int calls() const { return calls_; }
    void expire() { live_ = false; }

private:
    AttentionController* controller_;
    int timestep_;
    int calls_ = 0;
    bool live_ = true;
};

// Base for backends written in Python. Subclasses implement encode(image),
// decode(latent) and predict_noise(latent, t, hook, guidance) on numpy arrays.
class PyBackend : public DenoiserBackend {
public:
    explicit PyBackend(BackendCapabilities caps) : caps_(std::move(caps)) {}

    const BackendCapabilities& capabilities() const override { return caps_; }

    virtual py::object encode(py::array image) = 0;
    virtual py::object decode(py::array latent) = 0;
    virtual py::object predict_noise(py::array latent, int timestep, std::shared_ptr<AttentionHook> hook,
                                     double guidance) = 0;

    LatentGrid encode_image(const ImageBuffer& img) override {
        check_divisible(img, caps_.downsample_factor);
        py::gil_scoped_acquire gil;
        auto z = latent_checked(call_python("encode", [&] { return encode(image_to_array(img)); }));
        if (z.channels != caps_.latent_channels || z.height * caps_.downsample_factor != img.height ||
            z.width * caps_.downsample_factor != img.width)
            throw Error(ErrorKind::dimension_mismatch, "encode returned a latent of the wrong shape");
        return z;
    }

    ImageBuffer decode_latent(const LatentGrid& z) override {
        check_finite(z);
        py::gil_scoped_acquire gil;
        auto out = call_python("decode", [&] { return decode(latent_to_array(z)); });
        return image_from_array(out.cast<U8Array>());
    }

    LatentGrid predict_noise(const LatentGrid& z, int timestep, AttentionController* controller,
                             double guidance_scale) override {
        check_finite(z);
        py::gil_scoped_acquire gil;
        auto hook = std::make_shared<AttentionHook>(controller, timestep);
        py::object out;
        try {
            out = call_python("predict_noise",
                              [&] { return predict_noise(latent_to_array(z), timestep, hook, guidance_scale); });
        } catch (...) {
            hook->expire();
            throw;
        }
        hook->expire();
        auto eps = latent_checked(out, timestep);
        if (!eps.same_shape(z)) throw Error(ErrorKind::dimension_mismatch, "predict_noise changed the latent shape");
        return eps;
    }

private:
    template <typename Fn>
    static py::object call_python(const char* what, Fn&& fn) {
        try {
            return fn();
        } catch (py::error_already_set& e) {
            throw Error(ErrorKind::adapter, std::string("python backend ") + what + ": " + e.what());
        }
    }

    static LatentGrid latent_checked(const py::object& obj, int timestep = 0) {
        auto z = latent_from_array(obj.cast<F64Array>(), timestep);
        check_finite(z);
        return z;
    }

    BackendCapabilities caps_;
};

class PyBackendTrampoline : public PyBackend, public py::trampoline_self_life_support {
public:
    using PyBackend::PyBackend;

    py::object encode(py::array image) override { PYBIND11_OVERRIDE_PURE(py::object, PyBackend, encode, image); }
    py::object decode(py::array latent) override { PYBIND11_OVERRIDE_PURE(py::object, PyBackend, decode, latent); }
    py::object predict_noise(py::array latent, int timestep, std::shared_ptr<AttentionHook> hook,
                             double guidance) override {
        PYBIND11_OVERRIDE_PURE(py::object, PyBackend, predict_noise, latent, timestep, hook, guidance);
    }
};

py::dict result_dict(const SketchResult& r) {
    py::dict d;
    d["sketch"] = image_to_array(r.sketch);
    d["contour"] = r.contour_map ? py::object(image_to_array(*r.contour_map)) : py::none();
    d["pre_rcd"] = r.pre_rcd ? py::object(image_to_array(*r.pre_rcd)) : py::none();
    d["descriptor"] = r.descriptor_json;
    d["provenance"] = r.provenance_json;
    d["bank_hash"] = r.bank_hash;
    d["hash"] = descriptor_hash(r);
    return d;
}

class Pipeline {
public:
    explicit Pipeline(std::shared_ptr<DenoiserBackend> backend)
        : pipeline_(std::make_shared<SketchPipeline>(std::move(backend))) {}

    SketchJob job(const U8Array& color, const U8Array& reference, const py::dict& params) const {
        SketchJob job;
        job.color = image_from_array(color);
        job.reference = image_from_array(reference);
        apply_params(param_map(params), job);
        return job;
    }

    py::dict extract(const U8Array& color, const U8Array& reference, const py::dict& params,
                     const std::optional<std::filesystem::path>& out) {
        auto j = job(color, reference, params);
        SketchResult r;
        {
            py::gil_scoped_release release;
            r = pipeline_->extract_sketch(j);
        }
        auto d = result_dict(r);
        d["output_dir"] = out ? py::object(py::cast(write_result(r, *out))) : py::none();
        return d;
    }

    py::dict grid(const U8Array& color, const U8Array& reference, std::vector<double> zetas,
                  std::vector<double> betas, const py::dict& params) {
        GridSpec spec{job(color, reference, params), std::move(zetas), std::move(betas)};
        GridResult g;
        {
            py::gil_scoped_release release;
            g = pipeline_->interpolation_grid(spec);
        }
        py::list cells;
        for (const auto& c : g.cells) {
            py::dict cell;
            cell["zeta"] = c.zeta;
            cell["beta"] = c.beta;
            cell["error"] = c.error;
            cell["result"] = c.result ? py::object(result_dict(*c.result)) : py::none();
            cells.append(cell);
        }
        py::dict d;
        d["zeta"] = g.zeta_values;
        d["beta"] = g.beta_values;
        d["cells"] = cells;
        d["inversions"] = g.inversions;
        return d;
    }

    void register_detector(const std::string& name, const std::string& command) {
        pipeline_->detectors().register_detector(name, make_command_detector(command));
    }

    py::dict capabilities() { return capabilities_dict(pipeline_->backend().capabilities()); }
    std::vector<std::string> detectors() { return pipeline_->detectors().names(); }
    int inversion_count() const { return pipeline_->inversion_count(); }

private:
    std::shared_ptr<SketchPipeline> pipeline_;
};

}  // namespace

PYBIND11_MODULE(_mixsa, m) {
    m.doc() = "Reference-guided line drawing from color images.";
    m.attr("__version__") = kVersion;

    py::register_exception<Error>(m, "MixsaError", PyExc_RuntimeError);
    // Registered later, so consulted first: argument errors become ValueError.
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::invalid_argument && e.kind() != ErrorKind::dimension_mismatch) throw;
            py::set_error(PyExc_ValueError, e.what());
        }
    });

    //
    // Attention mixing
    //

    m.def("blend_queries",
          [](const Eigen::MatrixXd& qc, const Eigen::MatrixXd& qs, const Eigen::MatrixXd& qr, double zeta,
             double beta, bool decompose) {
              return blend_queries(qc, qs, qr, mix_params(zeta, beta, decompose, 0));
          },
          py::arg("qc"), py::arg("qs"), py::arg("qr"), py::arg("zeta") = 0.4, py::arg("beta") = 0.5,
          py::arg("decompose_texture") = true);

    m.def("blend_weights",
          [](double zeta, double beta, bool decompose) {
              auto w = blend_weights(mix_params(zeta, beta, decompose, 0));
              return py::make_tuple(w.color, w.contour, w.reference);
          },
          py::arg("zeta") = 0.4, py::arg("beta") = 0.5, py::arg("decompose_texture") = true,
          "Coefficients on (Qc, Qs, Qr).");

    m.def("mixed_attention",
          [](const Eigen::MatrixXd& qm, const Eigen::MatrixXd& kr, const Eigen::MatrixXd& vr, int scale_d) {
              return mixed_attention(qm, kr, vr, mix_params(0.4, 0.5, true, scale_d));
          },
          py::arg("qm"), py::arg("kr"), py::arg("vr"), py::arg("scale_d") = 0);

    //
    // Schedules and DDIM
    //

    m.def("make_schedule",
          [](int num_steps, const std::string& kind, double start, double end) {
              BetaSpec spec;
              if (kind == "scaled_linear") spec = {BetaSpec::Kind::scaled_linear, start, end};
              else if (kind == "linear") spec = BetaSpec::linear(start, end);
              else if (kind == "constant") spec = BetaSpec::constant(start);
              else throw Error(ErrorKind::invalid_argument, "unknown beta schedule: " + kind);
              auto s = make_schedule(num_steps, spec);
              py::dict d;
              d["betas"] = s.betas;
              d["alpha_bars"] = s.alpha_bars;
              return d;
          },
          py::arg("num_steps") = 1000, py::arg("kind") = "scaled_linear", py::arg("start") = 0.00085,
          py::arg("end") = 0.012);

    m.def("timestep_subsequence", &timestep_subsequence, py::arg("native_steps"), py::arg("sampling_steps"));

    m.def("ddim_step",
          [](const F64Array& z, const F64Array& eps, double alpha_from, double alpha_to) {
              return latent_to_array(ddim_step(latent_from_array(z), latent_from_array(eps), alpha_from, alpha_to));
          },
          py::arg("z"), py::arg("eps"), py::arg("alpha_from"), py::arg("alpha_to"));

    //
    // Image stages
    //

    m.def("canny_contours", [](const U8Array& img, double alpha) { return image_to_array(canny_contours(image_from_array(img), alpha)); },
          py::arg("image"), py::arg("alpha") = 0.55);

    m.def("apply_rcd",
          [](const U8Array& img, int threshold, std::optional<std::pair<double, double>> bilateral,
             std::optional<double> contrast, bool enabled) {
              RcdParams p;
              p.enabled = enabled;
              p.binarize_threshold = threshold;
              p.bilateral.enabled = bilateral.has_value();
              if (bilateral) std::tie(p.bilateral.spatial_sigma, p.bilateral.range_sigma) = *bilateral;
              p.contrast.enabled = contrast.has_value();
              if (contrast) p.contrast.strength = *contrast;
              return image_to_array(apply_rcd(image_from_array(img), p));
          },
          py::arg("image"), py::arg("binarize_threshold") = 230,
          py::arg("bilateral") = std::optional<std::pair<double, double>>(std::pair{2.0, 20.0}),
          py::arg("contrast") = py::none(), py::arg("enabled") = true,
          "bilateral is (spatial_sigma, range_sigma) or None; contrast is a strength or None.");

    m.def("mean_drift",
          [](const U8Array& img, int steps, std::optional<std::uint64_t> seed) {
              return mean_drift_diagnostic(image_from_array(img), steps, seed);
          },
          py::arg("image"), py::arg("steps") = 8, py::arg("noise_seed") = py::none());

    m.def("band_errors",
          [](const U8Array& img, int timestep, std::uint64_t seed) {
              auto sched = make_schedule(1000, BetaSpec::stable_diffusion());
              auto e = band_reconstruction_error(image_from_array(img), sched, timestep, {}, seed);
              return py::make_tuple(e.high_band_error, e.low_band_error);
          },
          py::arg("image"), py::arg("timestep"), py::arg("seed") = 0,
          "(high-band, low-band) share of the reconstruction MSE under the default schedule.");

    m.def("checkerboard", [](int side, int cell) { return image_to_array(checkerboard(side, cell)); },
          py::arg("side") = 64, py::arg("cell") = 2);

    m.def("white_fraction", [](const U8Array& img) { return white_fraction(image_from_array(img)); });

    //
    // Metrics
    //

    m.def("psnr", [](const U8Array& a, const U8Array& b) { return psnr(image_from_array(a), image_from_array(b)); });
    m.def("ssim", [](const U8Array& a, const U8Array& b) { return ssim(image_from_array(a), image_from_array(b)); });
    m.def("fid",
          [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
              auto r = fid(a, b);
              return py::make_tuple(r.value, r.jittered);
          },
          py::arg("a"), py::arg("b"), "Rows are feature vectors; returns (value, jittered).");
    m.def("kid", [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return kid(a, b); });

    //
    // Codecs
    //

    m.def("read_image", [](const std::filesystem::path& p) { return image_to_array(read_image(p)); });
    m.def("write_png", [](const U8Array& img, const std::filesystem::path& p) { write_png(image_from_array(img), p); });
    m.def("encode_png", [](const U8Array& img) {
        auto bytes = encode_png(image_from_array(img));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    });
    m.def("decode_image", [](const py::bytes& data) {
        std::string_view view = data;
        auto* p = reinterpret_cast<const std::uint8_t*>(view.data());
        return image_to_array(decode_image({p, view.size()}));
    });

    //
    // Backends and the pipeline
    //

    py::class_<AttentionHook, std::shared_ptr<AttentionHook>>(m, "AttentionHook")
        .def("__call__", &AttentionHook::call, py::arg("site"), py::arg("stage"), py::arg("q"), py::arg("k"),
             py::arg("v"),
             "Per-head (tokens x head_dim) Q, K, V for one self-attention site; returns per-head outputs.")
        .def_property_readonly("active", &AttentionHook::active)
        .def_property_readonly("timestep", &AttentionHook::timestep)
        .def_property_readonly("calls", &AttentionHook::calls);

    py::class_<PyBackend, PyBackendTrampoline, py::smart_holder>(m, "Backend")
        .def(py::init([](std::string id, int factor, int channels, int native_steps, bool guidance,
                         std::vector<std::pair<int, std::string>> sites) {
                 return std::make_unique<PyBackendTrampoline>(
                     make_capabilities(std::move(id), factor, channels, native_steps, guidance, sites));
             }),
             py::arg("id"), py::arg("downsample_factor"), py::arg("latent_channels"),
             py::arg("native_steps") = 1000, py::arg("supports_guidance") = true, py::arg("sites"))
        .def("encode", &PyBackend::encode)
        .def("decode", &PyBackend::decode)
        .def("predict_noise", py::overload_cast<py::array, int, std::shared_ptr<AttentionHook>, double>(&PyBackend::predict_noise))
        .def_property_readonly("capabilities", [](const PyBackend& b) { return capabilities_dict(b.capabilities()); });

    py::class_<Pipeline>(m, "Pipeline")
        .def(py::init([](const std::string& id) { return Pipeline(make_backend(id)); }), py::arg("backend") = "mock")
        .def(py::init([](std::shared_ptr<PyBackend> b) { return Pipeline(std::move(b)); }), py::arg("backend"))
        .def("extract", &Pipeline::extract, py::arg("color"), py::arg("reference"), py::arg("params") = py::dict(),
             py::arg("out") = py::none())
        .def("grid", &Pipeline::grid, py::arg("color"), py::arg("reference"), py::arg("zeta"), py::arg("beta"),
             py::arg("params") = py::dict())
        .def("register_detector", &Pipeline::register_detector, py::arg("name"), py::arg("command"))
        .def_property_readonly("capabilities", &Pipeline::capabilities)
        .def_property_readonly("detectors", &Pipeline::detectors)
        .def_property_readonly("inversion_count", &Pipeline::inversion_count);

    m.def("default_params", [] { return echo_params(SketchJob{}); });

    m.def("cli_main",
          [](const std::vector<std::string>& args) {
              std::ostringstream out, err;
              int code;
              {
                  py::gil_scoped_release release;
                  code = cli::run(args, out, err);
              }
              return py::make_tuple(code, out.str(), err.str());
          },
          py::arg("args"), "Runs the command-line tool; returns (exit code, stdout, stderr).");
}
