#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <torch/torch.h>

#include "eyeadapt/datakit.hpp"
#include "eyeadapt/errors.hpp"
#include "eyeadapt/evalkit.hpp"
#include "eyeadapt/losses.hpp"
#include "eyeadapt/pipeline.hpp"
#include "eyeadapt/segkit.hpp"

namespace py = pybind11;
using namespace eyeadapt;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

void require_2d(const py::array& a, const char* name) {
  if (a.ndim() != 2) throw ConfigError(std::string(name) + " must be a 2-D array");
}

Image to_image(const F32& a) {
  require_2d(a, "image");
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

Mask to_mask(const U8& a) {
  require_2d(a, "mask");
  Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

template <typename T>
py::array_t<T> to_array(const Grid<T>& g) {
  py::array_t<T> out({g.height, g.width});
  std::copy(g.data.begin(), g.data.end(), out.mutable_data());
  return out;
}

// Copies into a float64 tensor of the same shape.
torch::Tensor to_tensor(const F64& a) {
  std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

py::tuple sample_tuple(const ImageSample& s) {
  return py::make_tuple(s.id, to_array(s.image), to_array(s.mask));
}

}  // namespace

PYBIND11_MODULE(_eyeadapt, m) {
  m.doc() = "Procedural eye data, loss kernels and metrics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_OSError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  m.def(
      "render_eye",
      [](std::uint64_t seed, const std::string& style, int height, int width) {
        Rng rng(seed);
        const auto s = render_eye(random_eye_params(parse_style(style), rng), height, width);
        return py::make_tuple(to_array(s.image), to_array(s.mask));
      },
      py::arg("seed"), py::arg("style") = "synthetic", py::arg("height") = 64, py::arg("width") = 64,
      "Random eye geometry from `seed`, rendered to (image float32, mask uint8).");

  m.def(
      "generate_dataset",
      [](int n, const std::string& style, std::uint64_t seed, int height, int width) {
        const auto ds = generate_dataset(n, parse_style(style), seed, height, width);
        py::list out;
        for (const auto& s : ds.samples) out.append(sample_tuple(s));
        return out;
      },
      py::arg("n"), py::arg("style"), py::arg("seed"), py::arg("height") = 64, py::arg("width") = 64,
      "List of (id, image, mask) tuples.");

  m.def(
      "augment",
      [](const F32& image, const U8& mask, std::uint64_t seed) {
        ImageSample s{"sample", to_image(image), to_mask(mask), Domain::kSource};
        validate(s);
        Rng rng(seed);
        const auto out = augment(s, AugmentConfig{}.scaled_to_width(s.image.width), rng);
        return py::make_tuple(to_array(out.image), to_array(out.mask));
      },
      py::arg("image"), py::arg("mask"), py::arg("seed"));

  m.def(
      "miou", [](const U8& pred, const U8& gt, int classes) { return miou(to_mask(pred), to_mask(gt), classes); },
      py::arg("pred"), py::arg("gt"), py::arg("classes") = kNumClasses);

  m.def(
      "mmiou",
      [](const std::vector<double>& runs) {
        const auto r = mmiou(runs);
        return py::make_tuple(r.mean, r.std ? py::cast(*r.std) : py::none());
      },
      py::arg("runs"), "(mean, Bessel std or None)");

  m.def(
      "pca_project",
      [](const F64& points, int dims) {
        require_2d(points, "points");
        std::vector<std::vector<double>> rows(points.shape(0), std::vector<double>(points.shape(1)));
        for (py::ssize_t i = 0; i < points.shape(0); ++i)
          for (py::ssize_t j = 0; j < points.shape(1); ++j) rows[i][j] = *points.data(i, j);
        const auto r = pca_project(rows, dims);
        py::dict out;
        out["coords"] = r.coords;
        out["components"] = r.components;
        out["explained_ratio"] = r.explained_ratio;
        out["mean"] = r.mean;
        return out;
      },
      py::arg("points"), py::arg("dims") = 2);

  m.def(
      "class_stats",
      [](const F32& image, const U8& mask, int classes) {
        const auto s = class_stats(to_image(image), to_mask(mask), classes);
        return py::make_tuple(s.mean, s.var, s.count);
      },
      py::arg("image"), py::arg("mask"), py::arg("classes") = kNumClasses, "(mean, population var, count) per class");

  m.def(
      "sobel_edges",
      [](const F64& image) {
        require_2d(image, "image");
        const auto e = sobel_edges(to_tensor(image))[0].contiguous();
        py::array_t<double> out({e.size(0), e.size(1), e.size(2)});
        std::copy(e.data_ptr<double>(), e.data_ptr<double>() + e.numel(), out.mutable_data());
        return out;
      },
      py::arg("image"), "[2, H, W] array holding (g_x, g_y)");

  m.def(
      "distance_transform",
      [](const U8& inside) {
        const auto d = distance_transform(to_mask(inside));
        return to_array(d);
      },
      py::arg("inside"));

  m.def("contrastive_loss", py::overload_cast<double, bool, double>(&contrastive_loss), py::arg("dist"),
        py::arg("same_domain"), py::arg("margin") = 1.0);

  m.def(
      "domain_bce_loss",
      [](const F64& pred, const F64& labels) { return domain_bce_loss(to_tensor(pred), to_tensor(labels)).item<double>(); },
      py::arg("pred"), py::arg("labels"));

  m.def(
      "cycle_loss",
      [](const F64& s, const F64& rec_s, const F64& r, const F64& rec_r) {
        return cycle_loss(to_tensor(s), to_tensor(rec_s), to_tensor(r), to_tensor(rec_r)).item<double>();
      },
      py::arg("s"), py::arg("recovered_s"), py::arg("r"), py::arg("recovered_r"));

  m.def("epoch_schedule", &epoch_schedule, py::arg("m"), py::arg("n"), py::arg("multiplier") = 1.0);

  m.def(
      "git_blob_sha1", [](const py::bytes& data) { return git_blob_sha1(std::string(data)); }, py::arg("data"));
}
