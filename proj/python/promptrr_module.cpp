// Python bindings: numpy in/out wrappers around the wavelet, metrics,
// synthesis, and model-level operations.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstdint>
#include <string>

#include "promptrr/gradcheck.hpp"
#include "promptrr/image_io.hpp"
#include "promptrr/metrics.hpp"
#include "promptrr/trainer.hpp"
#include "promptrr/wavelet.hpp"

namespace py = pybind11;
using namespace promptrr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const FloatArray& arr) {
    py::buffer_info info = arr.request();
    Shape shape;
    shape.reserve(static_cast<std::size_t>(info.ndim));
    for (py::ssize_t d : info.shape) shape.push_back(static_cast<int>(d));
    Tensor t = Tensor::zeros(shape);
    const float* src = static_cast<const float*>(info.ptr);
    std::copy(src, src + t.numel(), t.data().begin());
    return t;
}

py::array_t<float> array_from(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    std::copy(t.data().begin(), t.data().end(), static_cast<float*>(out.request().ptr));
    return out;
}

TrainConfig make_config(const std::string& preset, const std::string& config_path) {
    TrainConfig cfg = preset_config(preset);
    if (!config_path.empty()) cfg = load_config(config_path, cfg);
    validate(cfg);
    return cfg;
}

// Owns a model plus its training data/optimizer plumbing for python callers.
class Model {
public:
    Model(const std::string& preset, const std::string& config_path)
        : model_(build_model(make_config(preset, config_path))) {}

    void load(const std::string& checkpoint_path) {
        load_stage_checkpoint(model_, checkpoint_path);
    }

    py::array_t<float> infer(const FloatArray& image, std::uint64_t seed) const {
        return array_from(infer_image(model_, tensor_from(image), seed));
    }

    py::dict train_stage(const std::string& stage, const std::string& data_dir) {
        const TrainSet data = load_train_set(data_dir);
        StageResult r;
        if (stage == "pretrain")
            r = stage_pretrain(model_, data);
        else if (stage == "diffusion")
            r = stage_diffusion(model_, data);
        else if (stage == "joint")
            r = stage_joint(model_, data);
        else
            throw std::invalid_argument("stage must be pretrain, diffusion, or joint");
        py::dict d;
        d["stage"] = r.stage;
        d["initial_loss"] = r.initial_loss;
        d["final_loss"] = r.final_loss;
        d["checkpoint"] = r.checkpoint_path;
        return d;
    }

    std::string preset() const { return model_.cfg.preset; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& e : model_.reg.entries()) n += static_cast<std::size_t>(e.second.numel());
        return n;
    }

private:
    PromptRR model_;
};

}  // namespace

PYBIND11_MODULE(promptrr, m) {
    m.doc() = "Prompt-guided single-image reflection removal";
    m.attr("__version__") = "0.1.0";

    m.def(
        "haar_forward", [](const FloatArray& x) { return array_from(haar2_fwd(tensor_from(x))); },
        py::arg("image"), "One Haar level: [C,H,W] -> [4C,H/2,W/2] (LL,LH,HL,HH per channel)");
    m.def(
        "haar_inverse",
        [](const FloatArray& x) { return array_from(haar2_inv(tensor_from(x))); },
        py::arg("bands"), "Inverse of haar_forward");

    m.def(
        "psnr",
        [](const FloatArray& a, const FloatArray& b, double max_val) {
            return psnr(tensor_from(a), tensor_from(b), max_val);
        },
        py::arg("a"), py::arg("b"), py::arg("max_val") = 1.0);
    m.def(
        "ssim",
        [](const FloatArray& a, const FloatArray& b) { return ssim(tensor_from(a), tensor_from(b)); },
        py::arg("a"), py::arg("b"), "Mean SSIM over channels, 11x11 Gaussian window");

    m.def(
        "random_scene",
        [](int h, int w, std::uint64_t seed) {
            Rng rng(seed);
            return array_from(random_scene(h, w, rng));
        },
        py::arg("height"), py::arg("width"), py::arg("seed"));

    m.def(
        "synthesize_pair",
        [](const FloatArray& background, const FloatArray& reflection, std::uint64_t seed) {
            Rng rng(seed);
            const ImagePair p = synthesize(tensor_from(background), tensor_from(reflection),
                                           SynthSpec{}, rng);
            py::dict d;
            d["input"] = array_from(p.input_q);
            d["gt"] = array_from(p.gt_b);
            d["kernel"] = array_from(p.kernel);
            d["weight"] = p.weight;
            return d;
        },
        py::arg("background"), py::arg("reflection"), py::arg("seed"),
        "Blur-and-add compositing of a reflection onto a clean scene");

    m.def(
        "write_dataset",
        [](const std::string& dir, int count, int size, std::uint64_t seed) {
            write_pair_dataset(dir, count, size, size, SynthSpec{}, seed);
        },
        py::arg("dir"), py::arg("count"), py::arg("size"), py::arg("seed"));

    m.def(
        "read_image", [](const std::string& path) { return array_from(read_ppm(path)); },
        py::arg("path"), "Binary PPM -> float [3,H,W] in [0,1]");
    m.def(
        "write_image",
        [](const std::string& path, const FloatArray& img) { write_ppm(path, tensor_from(img)); },
        py::arg("path"), py::arg("image"));

    m.def(
        "canonical_config",
        [](const std::string& preset) { return canonical_config(preset_config(preset)); },
        py::arg("preset") = "desk", "Every config key with the preset's values");

    m.def(
        "gradcheck",
        [](int max_coords, std::uint64_t seed, double step, double tol) {
            GradcheckOptions opt;
            opt.max_coords = max_coords;
            opt.seed = seed;
            opt.step = step;
            opt.tol = tol;
            const GradcheckReport r = run_gradcheck(opt);
            py::dict d;
            d["checked"] = r.checked;
            d["failed"] = r.failed;
            d["worst_rel"] = r.worst_rel;
            d["worst_param"] = r.worst_param;
            d["passed"] = r.passed();
            return d;
        },
        py::arg("max_coords") = 2000, py::arg("seed") = 7, py::arg("step") = 1e-3,
        py::arg("tol") = 1e-3, "Finite-difference audit of the whole-model gradient");

    py::class_<Model>(m, "Model")
        .def(py::init<const std::string&, const std::string&>(), py::arg("preset") = "desk",
             py::arg("config") = "")
        .def("load", &Model::load, py::arg("checkpoint"))
        .def("infer", &Model::infer, py::arg("image"), py::arg("seed") = 7,
             "Restore a [3,H,W] image; pads internally to a multiple of 8")
        .def("train_stage", &Model::train_stage, py::arg("stage"), py::arg("data_dir"))
        .def("param_count", &Model::param_count)
        .def_property_readonly("preset", &Model::preset);
}
