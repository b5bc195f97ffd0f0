#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "layergs/asset.hpp"
#include "layergs/body.hpp"
#include "layergs/config.hpp"
#include "layergs/errors.hpp"
#include "layergs/guidance.hpp"
#include "layergs/image_io.hpp"
#include "layergs/losses.hpp"
#include "layergs/parallel.hpp"
#include "layergs/pipeline.hpp"
#include "layergs/render.hpp"
#include "layergs/types.hpp"

namespace py = pybind11;
using namespace lgs;

namespace {

py::array_t<double> image_to_numpy(const Image& img) {
  if (img.empty()) return py::array_t<double>();
  if (img.channels() == 1) {
    py::array_t<double> out({img.height(), img.width()});
    std::copy(img.raw().begin(), img.raw().end(), out.mutable_data());
    return out;
  }
  py::array_t<double> out({img.height(), img.width(), img.channels()});
  std::copy(img.raw().begin(), img.raw().end(), out.mutable_data());
  return out;
}

Image numpy_to_image(const py::array_t<double, py::array::c_style |
                                                   py::array::forcecast>& arr) {
  if (arr.ndim() == 2) {
    Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)), 1);
    std::copy(arr.data(), arr.data() + arr.size(), img.raw().begin());
    return img;
  }
  if (arr.ndim() == 3) {
    Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)),
              static_cast<int>(arr.shape(2)));
    std::copy(arr.data(), arr.data() + arr.size(), img.raw().begin());
    return img;
  }
  throw std::invalid_argument("expected a HxW or HxWxC array");
}

py::dict render_to_dict(const RenderOutput& out) {
  py::dict d;
  d["color"] = image_to_numpy(out.color);
  d["opacity"] = image_to_numpy(out.opacity_map);
  d["depth"] = image_to_numpy(out.depth);
  d["mask"] = image_to_numpy(out.alpha_mask);
  return d;
}

GaussianLayer layer_from_arrays(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& centers,
    const py::array_t<double, py::array::c_style | py::array::forcecast>& scales,
    const py::array_t<double, py::array::c_style | py::array::forcecast>& colors,
    const py::array_t<double, py::array::c_style | py::array::forcecast>& opacities,
    int layer_index, const std::string& prompt) {
  if (centers.ndim() != 2 || centers.shape(1) != 3) {
    throw std::invalid_argument("centers must be [N, 3]");
  }
  const auto n = centers.shape(0);
  if (scales.shape(0) != n || colors.shape(0) != n || opacities.shape(0) != n) {
    throw std::invalid_argument("array lengths disagree");
  }
  GaussianLayer layer;
  layer.layer_index = layer_index;
  layer.prompt = prompt;
  layer.points.reserve(static_cast<std::size_t>(n));
  const bool per_axis_scale = scales.ndim() == 2;
  for (py::ssize_t i = 0; i < n; ++i) {
    GaussianPoint p;
    p.center = {centers.at(i, 0), centers.at(i, 1), centers.at(i, 2)};
    if (per_axis_scale) {
      p.log_scale = {std::log(scales.at(i, 0)), std::log(scales.at(i, 1)),
                     std::log(scales.at(i, 2))};
    } else {
      p.log_scale = Eigen::Vector3d::Constant(std::log(scales.at(i)));
    }
    p.color_logit = {inverse_sigmoid(colors.at(i, 0)),
                     inverse_sigmoid(colors.at(i, 1)),
                     inverse_sigmoid(colors.at(i, 2))};
    p.opacity_logit = inverse_sigmoid(opacities.at(i));
    layer.points.push_back(p);
  }
  return layer;
}

py::dict layer_to_arrays(const GaussianLayer& layer) {
  const auto n = static_cast<py::ssize_t>(layer.points.size());
  py::array_t<double> centers({n, py::ssize_t{3}});
  py::array_t<double> scales({n, py::ssize_t{3}});
  py::array_t<double> rotations({n, py::ssize_t{4}});
  py::array_t<double> colors({n, py::ssize_t{3}});
  py::array_t<double> opacities(n);
  for (py::ssize_t i = 0; i < n; ++i) {
    const GaussianPoint& p = layer.points[static_cast<std::size_t>(i)];
    for (int k = 0; k < 3; ++k) {
      centers.mutable_at(i, k) = p.center[k];
      scales.mutable_at(i, k) = p.scale()[k];
      colors.mutable_at(i, k) = p.color()[k];
    }
    for (int k = 0; k < 4; ++k) rotations.mutable_at(i, k) = p.rotation[k];
    opacities.mutable_at(i) = p.opacity();
  }
  py::dict d;
  d["centers"] = centers;
  d["scales"] = scales;
  d["rotations"] = rotations;
  d["colors"] = colors;
  d["opacities"] = opacities;
  return d;
}

Camera make_camera(const std::vector<double>& position,
                   const std::vector<double>& look_at, double fov_deg,
                   int width, int height) {
  if (position.size() != 3 || look_at.size() != 3) {
    throw std::invalid_argument("position/look_at must have 3 components");
  }
  Camera cam;
  cam.position = {position[0], position[1], position[2]};
  cam.look_at = {look_at[0], look_at[1], look_at[2]};
  cam.vertical_fov = fov_deg * M_PI / 180.0;
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Layered Gaussian-splatting avatar engine";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<AssetError>(m, "AssetError");
  py::register_exception<DivergenceError>(m, "DivergenceError");

  m.def("set_thread_count", &set_thread_count, py::arg("n"));
  m.def("thread_count", &thread_count);

  py::class_<Camera>(m, "Camera")
      .def(py::init(&make_camera), py::arg("position"), py::arg("look_at"),
           py::arg("fov_deg") = 45.0, py::arg("width") = 128,
           py::arg("height") = 128)
      .def_readonly("width", &Camera::width)
      .def_readonly("height", &Camera::height);

  py::class_<GaussianLayer>(m, "GaussianLayer")
      .def_readwrite("layer_index", &GaussianLayer::layer_index)
      .def_readwrite("prompt", &GaussianLayer::prompt)
      .def("__len__",
           [](const GaussianLayer& l) { return l.points.size(); })
      .def("arrays", &layer_to_arrays);

  py::class_<LayeredAvatar>(m, "LayeredAvatar")
      .def(py::init<>())
      .def_readwrite("body_prompt", &LayeredAvatar::body_prompt)
      .def("__len__", [](const LayeredAvatar& a) { return a.layers.size(); })
      .def("layer", (GaussianLayer & (LayeredAvatar::*)(int)) &LayeredAvatar::layer,
           py::return_value_policy::reference_internal, py::arg("m"))
      .def("add_layer",
           [](LayeredAvatar& a, const GaussianLayer& l) { a.layers.push_back(l); })
      .def("prefix_size", [](const LayeredAvatar& a, int m) {
        return a.compose_prefix(m).size();
      });

  py::class_<ProxyBody>(m, "ProxyBody")
      .def_static(
          "default_body",
          [](double height_scale, double girth_scale) {
            return ProxyBody::default_body({height_scale, girth_scale});
          },
          py::arg("height_scale") = 1.0, py::arg("girth_scale") = 1.0)
      .def("joint_names", &ProxyBody::joint_names)
      .def("height", &ProxyBody::height)
      .def("center", [](const ProxyBody& b) {
        const Eigen::Vector3d c = b.center();
        return std::vector<double>{c.x(), c.y(), c.z()};
      });

  m.def(
      "sample_surface",
      [](const ProxyBody& body, int n, double offset, std::uint64_t seed) {
        const auto pts = sample_surface(body, n, offset, seed);
        py::array_t<double> out({static_cast<py::ssize_t>(pts.size()),
                                 py::ssize_t{3}});
        for (std::size_t i = 0; i < pts.size(); ++i) {
          for (int k = 0; k < 3; ++k) {
            out.mutable_at(static_cast<py::ssize_t>(i), k) = pts[i][k];
          }
        }
        return out;
      },
      py::arg("body"), py::arg("n"), py::arg("layer_offset") = 0.0,
      py::arg("seed") = 0);

  m.def("make_layer", &layer_from_arrays, py::arg("centers"),
        py::arg("scales"), py::arg("colors"), py::arg("opacities"),
        py::arg("layer_index") = 1, py::arg("prompt") = "");

  m.def(
      "render_layer",
      [](const GaussianLayer& layer, const Camera& cam) {
        return render_to_dict(render(PointSet::from_layer(layer), cam));
      },
      py::arg("layer"), py::arg("camera"));
  m.def(
      "oracle_render_layer",
      [](const GaussianLayer& layer, const Camera& cam) {
        return render_to_dict(oracle_render(PointSet::from_layer(layer), cam));
      },
      py::arg("layer"), py::arg("camera"));
  m.def(
      "render_prefix",
      [](const LayeredAvatar& avatar, int m, const Camera& cam) {
        return render_to_dict(render(avatar.compose_prefix(m), cam));
      },
      py::arg("avatar"), py::arg("m"), py::arg("camera"));
  m.def(
      "render_layer_pair",
      [](const LayeredAvatar& avatar, int m, const Camera& cam) {
        const LayerPairRender pair = render_layer_pair(avatar, m, cam);
        py::dict d;
        d["local"] = render_to_dict(pair.local);
        d["global"] = render_to_dict(pair.global);
        return d;
      },
      py::arg("avatar"), py::arg("m"), py::arg("camera"));

  m.def(
      "ssim",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        const SsimResult res = ssim(numpy_to_image(a), numpy_to_image(b));
        return py::make_tuple(res.value, image_to_numpy(res.grad_a),
                              image_to_numpy(res.grad_b));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "density_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& opacity,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& mask) {
        MaskImage mi;
        mi.values = numpy_to_image(mask);
        const LossResult res = density_loss(numpy_to_image(opacity), mi);
        return py::make_tuple(res.value, image_to_numpy(res.grad));
      },
      py::arg("opacity_map"), py::arg("mask"));

  m.def(
      "densify_perturb",
      [](const GaussianLayer& layer, std::uint64_t seed) {
        return densify_perturb(layer, seed);
      },
      py::arg("layer"), py::arg("seed"));

  m.def("save_asset", &save_asset, py::arg("path"), py::arg("avatar"));
  m.def("load_asset", &load_asset, py::arg("path"));
  m.def("asset_toc", &asset_toc, py::arg("path"));
  m.def("write_png",
        [](const std::string& path,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& img) {
          write_png(path, numpy_to_image(img));
        });
  m.def("write_pfm",
        [](const std::string& path,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& img) {
          write_pfm(path, numpy_to_image(img));
        });
  m.def("read_pfm", [](const std::string& path) {
    return image_to_numpy(read_pfm(path));
  });

  py::class_<TransferConfig>(m, "TransferConfig")
      .def(py::init<>())
      .def_readwrite("iterations", &TransferConfig::iterations)
      .def_readwrite("lr_center", &TransferConfig::lr_center)
      .def_readwrite("lr_scale", &TransferConfig::lr_scale)
      .def_readwrite("lambda_fitting", &TransferConfig::lambda_fitting)
      .def_readwrite("lambda_similarity", &TransferConfig::lambda_similarity)
      .def_readwrite("lambda_visibility", &TransferConfig::lambda_visibility)
      .def_readwrite("delta_occ", &TransferConfig::delta_occ)
      .def_readwrite("cameras", &TransferConfig::cameras);

  m.def(
      "transfer_garment",
      [](const GaussianLayer& source, const LayeredAvatar& target,
         const ProxyBody& body, const TransferConfig& cfg, int resolution) {
        RigSpec rig;
        rig.width = rig.height = resolution;
        const TransferResult res =
            transfer_garment(source, target, body, cfg, {}, rig);
        py::dict metrics;
        metrics["initial_fitting"] = res.metrics.initial_fitting;
        metrics["final_fitting"] = res.metrics.final_fitting;
        metrics["initial_visibility"] = res.metrics.initial_visibility;
        metrics["final_visibility"] = res.metrics.final_visibility;
        metrics["final_similarity"] = res.metrics.final_similarity;
        return py::make_tuple(res.layer, metrics);
      },
      py::arg("source_layer"), py::arg("target_avatar"), py::arg("target_body"),
      py::arg("config") = TransferConfig{}, py::arg("resolution") = 64);

  // Mock-backend generation, driven by a JSON run config on disk.
  m.def(
      "generate",
      [](const std::string& config_path, std::uint64_t seed) {
        RunConfig cfg = load_run_config(config_path);
        if (seed != 0) cfg.seed = seed;
        derive_seeds(cfg);
        if (cfg.guidance.mode != GuidanceSelect::Mode::mock) {
          throw ConfigError("generate(): only mock guidance is wired here");
        }
        auto views = load_reference_views(cfg.guidance.reference_dir);
        MockBackend backend(views);
        const ProxyBody body = ProxyBody::default_body(cfg.shape);
        GeneratorOptions opts;
        opts.render = cfg.render_options;
        opts.rig = cfg.rig;
        Generator gen(body, backend, opts, views);
        LayeredAvatar avatar;
        avatar.body_prompt = cfg.body_prompt;
        for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
          gen.generate_layer(avatar, static_cast<int>(i + 1), cfg.layers[i]);
        }
        return quantized_to_f32(avatar);
      },
      py::arg("config_path"), py::arg("seed") = 0);
}
