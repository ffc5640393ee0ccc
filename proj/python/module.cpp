#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "bigr/bundle.hpp"
#include "bigr/runtime.hpp"
#include "bigr/toy_data.hpp"
#include "bigr/zeroshot.hpp"
#include "cli.hpp"

namespace py = pybind11;
using namespace bigr;

namespace {

py::array_t<float> image_to_array(const Image& im) {
  py::array_t<float> out({im.height, im.width, im.channels});
  std::copy(im.pixels.begin(), im.pixels.end(), out.mutable_data());
  return out;
}

Image array_to_image(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  require(a.ndim() == 3, ErrorKind::InvalidInput, "image array must have shape (height, width, channels)");
  Image im(static_cast<int>(a.shape(2)), static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), im.pixels.begin());
  return im;
}

py::array_t<std::uint8_t> grid_to_array(const BinaryCodeGrid& g) {
  py::array_t<std::uint8_t> out({g.height(), g.width(), g.bits_per_code()});
  std::copy(g.bits().begin(), g.bits().end(), out.mutable_data());
  return out;
}

BinaryCodeGrid array_to_grid(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  require(a.ndim() == 3, ErrorKind::InvalidInput, "code array must have shape (height, width, bits)");
  return BinaryCodeGrid(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                        std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

// Loaded tokenizer + model pair with the sampler settings from its config.
class Bundle {
 public:
  explicit Bundle(const std::filesystem::path& dir) : bundle_(load_bundle(dir)) {}

  const Config& config() const { return bundle_.config; }

  SamplerConfig sampler(const py::dict& overrides) const {
    Config c = bundle_.config;
    for (const auto& [k, v] : overrides) c.set(py::str(k).cast<std::string>(), py::str(v).cast<std::string>());
    return sampler_config(c);
  }

  py::tuple sample(int class_id, std::uint64_t seed, const py::dict& overrides) const {
    SamplerConfig sc = sampler(overrides);
    Rng rng(seed);
    GenerateRequest req;
    req.class_id = class_id;
    SampleResult r;
    {
      py::gil_scoped_release release;
      r = generate(*bundle_.model, req, sc, rng);
    }
    return py::make_tuple(grid_to_array(r.grid), image_to_array(bundle_.tokenizer->decode(r.grid)), r.trace.to_jsonl());
  }

  py::array_t<std::uint8_t> encode(const py::array_t<float, py::array::c_style | py::array::forcecast>& image) const {
    return grid_to_array(bundle_.tokenizer->encode(array_to_image(image)));
  }

  py::array_t<float> decode(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& codes) const {
    return image_to_array(bundle_.tokenizer->decode(array_to_grid(codes)));
  }

  py::array_t<double> features(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& codes,
                               int layer) const {
    const std::vector<BinaryCodeGrid> grids{array_to_grid(codes)};
    const Eigen::MatrixXd f = extract_features(*bundle_.model, grids,
                                               layer > 0 ? layer : bundle_.model->config().backbone.probe_layer());
    py::array_t<double> out(f.cols());
    for (Eigen::Index j = 0; j < f.cols(); ++j) out.mutable_data()[j] = f(0, j);
    return out;
  }

  py::array_t<float> interpolate(int a, int b, double lambda, std::uint64_t seed, const py::dict& overrides) const {
    Rng rng(seed);
    return image_to_array(interpolate_classes(*bundle_.tokenizer, *bundle_.model, a, b, lambda, sampler(overrides), rng).image);
  }

  int num_classes() const { return bundle_.model->config().backbone.num_classes; }

 private:
  ModelBundle bundle_;
};

}  // namespace

PYBIND11_MODULE(bigr, m) {
  tune_allocator();
  m.doc() = "Binary-latent masked image generation";

  static py::exception<Error> error(m, "BigrError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.def("code_to_index", [](const std::vector<std::uint8_t>& bits) { return code_to_index(bits); }, py::arg("bits"),
        "Token index of a code; bits[0] is the least-significant bit.");
  m.def("index_to_code", [](std::uint64_t index, int width) { return index_to_code(index, width).bits; }, py::arg("index"),
        py::arg("width"));

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def_property_readonly("training_steps", &NoiseSchedule::training_steps)
      .def("beta", &NoiseSchedule::beta, py::arg("t"))
      .def("survival", &NoiseSchedule::survival, py::arg("t"))
      .def("timestep", &NoiseSchedule::timestep, py::arg("t"));
  m.def("build_schedule", &build_schedule, py::arg("total_steps"));
  m.def("respace_schedule", &respace_schedule, py::arg("schedule"), py::arg("inference_steps"));
  m.def("forward_marginal", py::overload_cast<std::uint8_t, int, const NoiseSchedule&>(&forward_marginal), py::arg("z0"),
        py::arg("t"), py::arg("schedule"));
  m.def("posterior_param", py::overload_cast<std::uint8_t, double, int, const NoiseSchedule&>(&posterior_param),
        py::arg("z_t"), py::arg("p_z0"), py::arg("t"), py::arg("schedule"));
  m.def("residual_to_initial", py::overload_cast<std::uint8_t, double>(&residual_to_initial), py::arg("z_t"),
        py::arg("residual_prob"));
  m.def("guided_logit", &guided_logit, py::arg("cond"), py::arg("uncond"), py::arg("scale"));
  m.def("wbce_weights", [](const std::vector<std::uint8_t>& y) { return wbce_weights(y); }, py::arg("target"));
  m.def(
      "wbce_loss",
      [](std::vector<double> logits, const std::vector<std::uint8_t>& target) {
        const auto r = wbce_loss(ResidualPrediction::from_logits(std::move(logits)), BinaryCode{target});
        return py::make_tuple(r.loss, r.grad_logits);
      },
      py::arg("logits"), py::arg("target"), "Weighted BCE of one code; returns (loss, d loss / d logits).");

  m.def("binary_entropy", [](const std::vector<double>& p) { return binary_entropy(p); }, py::arg("probs"));
  m.def("unmask_remaining", &unmask_remaining, py::arg("n"), py::arg("iterations"));
  m.def("top_k", [](const std::vector<double>& s, int k) { return top_k(s, k); }, py::arg("scores"), py::arg("k"));
  m.def(
      "mask_ratio",
      [](int n, double u, std::uint64_t seed) {
        Rng rng(seed);
        return static_cast<double>(sample_train_mask(n, u, rng).count()) / n;
      },
      py::arg("n"), py::arg("u"), py::arg("seed") = 0);

  m.def(
      "toy_dataset",
      [](int count, int size, std::uint64_t seed) {
        const Dataset d = make_toy_dataset({count, size, 10, seed});
        py::array_t<float> images({count, size, size, d.channels});
        for (int i = 0; i < count; ++i) {
          std::copy(d.images[static_cast<std::size_t>(i)].pixels.begin(), d.images[static_cast<std::size_t>(i)].pixels.end(),
                    images.mutable_data() + static_cast<std::ptrdiff_t>(i) * size * size * d.channels);
        }
        return py::make_tuple(images, d.labels);
      },
      py::arg("count"), py::arg("size") = 32, py::arg("seed") = 0,
      "Procedural 10-class images as (images[N, H, W, C], labels).");

  py::class_<Bundle>(m, "Bundle")
      .def(py::init<const std::filesystem::path&>(), py::arg("directory"))
      .def_property_readonly("num_classes", &Bundle::num_classes)
      .def_property_readonly("config", [](const Bundle& b) { return b.config().serialize(); })
      .def("sample", &Bundle::sample, py::arg("class_id"), py::arg("seed") = 0, py::arg("overrides") = py::dict(),
           "Generate one image; returns (codes[h, w, K], image[H, W, C], trace_jsonl).")
      .def("encode", &Bundle::encode, py::arg("image"))
      .def("decode", &Bundle::decode, py::arg("codes"))
      .def("features", &Bundle::features, py::arg("codes"), py::arg("layer") = 0)
      .def("interpolate", &Bundle::interpolate, py::arg("class_a"), py::arg("class_b"), py::arg("lam"),
           py::arg("seed") = 0, py::arg("overrides") = py::dict());

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "bigr");
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a command-line invocation in-process; returns (exit_code, stdout, stderr).");
}
