#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>
#include <sstream>

#include "seedsplat/losses.hpp"
#include "seedsplat/synthetic.hpp"
#include "seedsplat/trainer.hpp"

namespace py = pybind11;
using namespace seedsplat;

namespace {

// Images cross the boundary as float64 arrays of shape (height, width, 3).
py::array_t<double> image_to_array(const Image& img) {
  py::array_t<double> out({img.height, img.width, 3});
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

Image array_to_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3)
    throw py::value_error("expected an array of shape (height, width, 3)");
  Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
  std::copy(arr.data(), arr.data() + arr.size(), img.data.begin());
  return img;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Seed-based dynamic gaussian splatting core";

  py::register_exception<DataError>(m, "DataError");
  py::register_exception<NumericError>(m, "NumericError");

  py::class_<Camera>(m, "Camera")
      .def(py::init<>())
      .def_readwrite("id", &Camera::id)
      .def_readwrite("width", &Camera::width)
      .def_readwrite("height", &Camera::height)
      .def_readwrite("fx", &Camera::fx)
      .def_readwrite("fy", &Camera::fy)
      .def_readwrite("cx", &Camera::cx)
      .def_readwrite("cy", &Camera::cy)
      .def_readwrite("rotation", &Camera::rotation)
      .def_readwrite("translation", &Camera::translation)
      .def_readwrite("split", &Camera::split)
      .def("center", &Camera::center)
      .def_static("look_at", &Camera::look_at, py::arg("eye"), py::arg("target"),
                  py::arg("width"), py::arg("height"), py::arg("focal"), py::arg("id"))
      .def("__repr__", [](const Camera& c) {
        std::ostringstream s;
        s << "Camera(id='" << c.id << "', " << c.width << "x" << c.height << ", split='"
          << c.split << "')";
        return s.str();
      });

  py::class_<FrameDataset>(m, "FrameDataset")
      .def_readonly("root", &FrameDataset::root)
      .def_readonly("cameras", &FrameDataset::cameras)
      .def_readonly("frame_count", &FrameDataset::frame_count)
      .def("load_frame",
           [](const FrameDataset& d, int camera, int frame) {
             return image_to_array(d.load_frame(camera, frame));
           },
           py::arg("camera"), py::arg("frame"))
      .def("__repr__", [](const FrameDataset& d) {
        std::ostringstream s;
        s << "FrameDataset(cameras=" << d.cameras.size() << ", frames=" << d.frame_count << ")";
        return s.str();
      });

  py::class_<HashFieldConfig>(m, "HashFieldConfig")
      .def(py::init<>())
      .def_readwrite("levels", &HashFieldConfig::levels)
      .def_readwrite("features_per_entry", &HashFieldConfig::features_per_entry)
      .def_readwrite("table_size", &HashFieldConfig::table_size)
      .def_readwrite("base_resolution", &HashFieldConfig::base_resolution)
      .def_readwrite("max_resolution", &HashFieldConfig::max_resolution)
      .def_readwrite("time_base_resolution", &HashFieldConfig::time_base_resolution)
      .def_readwrite("time_max_resolution", &HashFieldConfig::time_max_resolution);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("iterations", &TrainConfig::iterations)
      .def_readwrite("rng_seed", &TrainConfig::rng_seed)
      .def_readwrite("lambda_ssim", &TrainConfig::lambda_ssim)
      .def_readwrite("lambda_volume", &TrainConfig::lambda_volume)
      .def_readwrite("k", &TrainConfig::k)
      .def_readwrite("feature_dim", &TrainConfig::feature_dim)
      .def_readwrite("hidden_dim", &TrainConfig::hidden_dim)
      .def_readwrite("tau_alpha", &TrainConfig::tau_alpha)
      .def_readwrite("hash", &TrainConfig::hash)
      .def_readwrite("init_frames", &TrainConfig::init_frames)
      .def_readwrite("lr_features", &TrainConfig::lr_features)
      .def_readwrite("lr_scales", &TrainConfig::lr_scales)
      .def_readwrite("lr_hash", &TrainConfig::lr_hash)
      .def_readwrite("lr_mlp", &TrainConfig::lr_mlp)
      .def_readwrite("lr_mlp_final", &TrainConfig::lr_mlp_final)
      .def_readwrite("tau_grow", &TrainConfig::tau_grow)
      .def_readwrite("asg_interval", &TrainConfig::asg_interval)
      .def_readwrite("asg_start", &TrainConfig::asg_start)
      .def_readwrite("asg_end", &TrainConfig::asg_end)
      .def_readwrite("no_static", &TrainConfig::no_static)
      .def_readwrite("no_deactivation", &TrainConfig::no_deactivation)
      .def_readwrite("no_asg", &TrainConfig::no_asg)
      .def_readwrite("background", &TrainConfig::background)
      .def_readwrite("progress_interval", &TrainConfig::progress_interval)
      .def("echo", &TrainConfig::echo);

  py::class_<MetricsRow>(m, "MetricsRow")
      .def_readonly("iter", &MetricsRow::iter)
      .def_readonly("psnr", &MetricsRow::psnr)
      .def_readonly("ssim", &MetricsRow::ssim)
      .def_readonly("l1", &MetricsRow::l1)
      .def_readonly("seeds", &MetricsRow::seeds)
      .def_readonly("active_gaussians", &MetricsRow::active_gaussians);

  py::class_<EvalRow>(m, "EvalRow")
      .def_readonly("frame", &EvalRow::frame)
      .def_readonly("cam", &EvalRow::cam)
      .def_readonly("psnr", &EvalRow::psnr)
      .def_readonly("ssim", &EvalRow::ssim);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("seed_count", [](const Checkpoint& c) { return c.seeds.count(); })
      .def_property_readonly("frame_count",
                             [](const Checkpoint& c) { return c.bounds.frame_count; })
      .def_property_readonly("config_echo", [](const Checkpoint& c) { return c.config_echo; })
      .def_property_readonly("aabb_min", [](const Checkpoint& c) { return c.bounds.aabb_min; })
      .def_property_readonly("aabb_max", [](const Checkpoint& c) { return c.bounds.aabb_max; })
      .def("__repr__", [](const Checkpoint& c) {
        std::ostringstream s;
        s << "Checkpoint(seeds=" << c.seeds.count() << ", frames=" << c.bounds.frame_count << ")";
        return s.str();
      });

  py::class_<TrainOutput>(m, "TrainOutput")
      .def_readonly("model", &TrainOutput::model)
      .def_readonly("metrics", &TrainOutput::metrics)
      .def_readonly("grown_seeds", &TrainOutput::grown_seeds)
      .def_readonly("skipped_updates", &TrainOutput::skipped_updates);

  py::class_<SyntheticConfig>(m, "SyntheticConfig")
      .def(py::init<>())
      .def_readwrite("width", &SyntheticConfig::width)
      .def_readwrite("height", &SyntheticConfig::height)
      .def_readwrite("focal", &SyntheticConfig::focal)
      .def_readwrite("camera_count", &SyntheticConfig::camera_count)
      .def_readwrite("test_cameras", &SyntheticConfig::test_cameras)
      .def_readwrite("frame_count", &SyntheticConfig::frame_count)
      .def_readwrite("sphere_points", &SyntheticConfig::sphere_points)
      .def_readwrite("quad_points", &SyntheticConfig::quad_points)
      .def_readwrite("with_quad", &SyntheticConfig::with_quad)
      .def_readwrite("point_coverage", &SyntheticConfig::point_coverage)
      .def_readwrite("rng_seed", &SyntheticConfig::rng_seed);

  m.def("gen_synthetic", &gen_synthetic, py::arg("config"), py::arg("root"),
        "Write a synthetic multi-camera capture to a directory");
  m.def("load_dataset", &load_dataset, py::arg("root"),
        "Load a capture directory (cameras.json, frames/, points/)");
  m.def("init_model",
        [](const FrameDataset& d, const TrainConfig& c) { return init_model(d, c); },
        py::arg("dataset"), py::arg("config"));
  m.def("train",
        [](const FrameDataset& d, const TrainConfig& c, bool progress) {
          return train(d, c, progress ? &std::cerr : nullptr);
        },
        py::arg("dataset"), py::arg("config"), py::arg("progress") = false,
        py::call_guard<py::gil_scoped_release>());
  m.def("render",
        [](const Checkpoint& model, const Camera& camera, double frame_time, const Vec3& background,
           bool keep_inactive) {
          return image_to_array(
              render_model(model, camera, frame_time, {}, background, keep_inactive));
        },
        py::arg("model"), py::arg("camera"), py::arg("frame_time"),
        py::arg("background") = Vec3(Vec3::Zero()), py::arg("keep_inactive") = false);
  m.def("evaluate",
        [](const Checkpoint& model, const FrameDataset& d, const std::string& split) {
          return evaluate_model(model, d, split);
        },
        py::arg("model"), py::arg("dataset"), py::arg("split") = "test");
  m.def("format_metrics", &format_metrics, py::arg("rows"));
  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("model"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("read_png", [](const std::string& path) { return image_to_array(read_png(path)); },
        py::arg("path"));
  m.def("write_png",
        [](const std::string& path,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
          write_png(path, array_to_image(arr));
        },
        py::arg("path"), py::arg("image"));
  m.def("psnr",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
          return psnr(array_to_image(a), array_to_image(b));
        },
        py::arg("rendered"), py::arg("target"));
}
