#include "layergs/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "layergs/errors.hpp"
#include "layergs/image_io.hpp"
#include "layergs/rng.hpp"

namespace lgs {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

double get_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) {
    throw ConfigError(std::string("config: '") + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

int get_int(const json& j, const char* key, int fallback) {
  return static_cast<int>(get_num(j, key, fallback));
}

std::string get_str(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) {
    throw ConfigError(std::string("config: '") + key + "' must be a string");
  }
  return j.at(key).get<std::string>();
}

AttributeLearningRates parse_lr(const json& j) {
  AttributeLearningRates lr;
  lr.center = get_num(j, "center", lr.center);
  lr.scale = get_num(j, "scale", lr.scale);
  lr.rotation = get_num(j, "rotation", lr.rotation);
  lr.color = get_num(j, "color", lr.color);
  lr.opacity = get_num(j, "opacity", lr.opacity);
  return lr;
}

StageConfig parse_stage(const json& j, const StageConfig& defaults) {
  StageConfig cfg = defaults;
  cfg.iterations = get_int(j, "iterations", cfg.iterations);
  cfg.densify_rounds = get_int(j, "densify_rounds", cfg.densify_rounds);
  cfg.cameras_per_step = get_int(j, "cameras_per_step", cfg.cameras_per_step);
  cfg.seed = static_cast<std::uint64_t>(get_num(j, "seed", 0.0));
  cfg.weights.lambda_local =
      get_num(j, "lambda_local", cfg.weights.lambda_local);
  cfg.weights.lambda_global =
      get_num(j, "lambda_global", cfg.weights.lambda_global);
  cfg.weights.lambda_density =
      get_num(j, "lambda_density", cfg.weights.lambda_density);
  if (j.contains("lr")) cfg.lr = parse_lr(j.at("lr"));
  if (cfg.iterations < 0 || cfg.densify_rounds < 0 || cfg.cameras_per_step < 1) {
    throw ConfigError("config: stage counts must be non-negative "
                      "(cameras_per_step >= 1)");
  }
  if (cfg.weights.lambda_local < 0 || cfg.weights.lambda_global < 0 ||
      cfg.weights.lambda_density < 0) {
    throw ConfigError("config: stage loss weights must be >= 0");
  }
  return cfg;
}

Camera view_camera(const json& v, const RigSpec& rig, const ProxyShape&) {
  Camera cam;
  cam.width = rig.width;
  cam.height = rig.height;
  cam.vertical_fov = rig.fov_deg * M_PI / 180.0;
  Eigen::Vector3d look_at(0.0, 0.85, 0.0);
  if (v.contains("look_at")) {
    const auto& l = v.at("look_at");
    look_at = {l.at(0).get<double>(), l.at(1).get<double>(),
               l.at(2).get<double>()};
  }
  cam.look_at = look_at;
  if (v.contains("position")) {
    const auto& p = v.at("position");
    cam.position = {p.at(0).get<double>(), p.at(1).get<double>(),
                    p.at(2).get<double>()};
  } else {
    const double az = get_num(v, "azimuth_deg", 0.0) * M_PI / 180.0;
    const double el = get_num(v, "elevation_deg", 10.0) * M_PI / 180.0;
    const double radius = get_num(v, "radius", 4.25);
    cam.position =
        look_at + radius * Eigen::Vector3d(std::sin(az) * std::cos(el),
                                           std::sin(el),
                                           std::cos(az) * std::cos(el));
  }
  cam.validate();
  return cam;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text,
                           const std::string& source_name) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + source_name + ": " + e.what());
  }

  RunConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(get_num(root, "seed", 1.0));
  cfg.output_dir = get_str(root, "output_dir", cfg.output_dir);

  if (root.contains("render")) {
    const json& r = root.at("render");
    cfg.rig.width = get_int(r, "width", cfg.rig.width);
    cfg.rig.height = get_int(r, "height", cfg.rig.height);
    cfg.rig.fov_deg = get_num(r, "fov_deg", cfg.rig.fov_deg);
    cfg.rig.radius_factor = get_num(r, "radius_factor", cfg.rig.radius_factor);
    cfg.rig.elevation_lo_deg =
        get_num(r, "elevation_lo_deg", cfg.rig.elevation_lo_deg);
    cfg.rig.elevation_hi_deg =
        get_num(r, "elevation_hi_deg", cfg.rig.elevation_hi_deg);
    if (cfg.rig.width < 1 || cfg.rig.height < 1) {
      throw ConfigError("config: render resolution must be at least 1x1");
    }
  }

  if (root.contains("body")) {
    const json& b = root.at("body");
    cfg.body_prompt = get_str(b, "prompt", cfg.body_prompt);
    cfg.shape.height_scale = get_num(b, "height_scale", 1.0);
    cfg.shape.girth_scale = get_num(b, "girth_scale", 1.0);
    if (cfg.shape.height_scale <= 0.0 || cfg.shape.girth_scale <= 0.0) {
      throw ConfigError("config: body shape scales must be positive");
    }
  }

  if (!root.contains("layers") || !root.at("layers").is_array() ||
      root.at("layers").empty()) {
    throw ConfigError("config: at least one layer is required");
  }
  for (const auto& l : root.at("layers")) {
    LayerSpec spec;
    spec.prompt = get_str(l, "prompt", "");
    if (spec.prompt.empty()) {
      throw ConfigError("config: every layer needs a non-empty prompt");
    }
    if (l.contains("joints")) {
      for (const auto& name : l.at("joints")) {
        spec.init.box_joints.push_back(name.get<std::string>());
      }
    } else if (l.contains("preset")) {
      spec.init.box_joints =
          garment_preset_joints(l.at("preset").get<std::string>());
    }
    spec.init.box_padding = get_num(l, "padding", spec.init.box_padding);
    spec.init.point_count = get_int(l, "points", spec.init.point_count);
    if (spec.init.point_count < 1) {
      throw ConfigError("config: layer points must be >= 1");
    }
    StageConfig coarse_default;
    coarse_default.iterations = 400;
    StageConfig fine_default;
    fine_default.iterations = 600;
    fine_default.densify_rounds = 4;
    spec.coarse = parse_stage(l.value("coarse", json::object()), coarse_default);
    spec.fine = parse_stage(l.value("fine", json::object()), fine_default);
    cfg.layers.push_back(std::move(spec));
  }

  if (root.contains("guidance")) {
    const json& g = root.at("guidance");
    const std::string mode = get_str(g, "mode", "mock");
    if (mode == "mock") {
      cfg.guidance.mode = GuidanceSelect::Mode::mock;
      cfg.guidance.reference_dir = get_str(g, "reference_dir", "");
      if (cfg.guidance.reference_dir.empty()) {
        throw ConfigError("config: mock guidance needs 'reference_dir'");
      }
    } else if (mode == "external") {
      cfg.guidance.mode = GuidanceSelect::Mode::external;
      cfg.guidance.host = get_str(g, "host", cfg.guidance.host);
      cfg.guidance.port = get_int(g, "port", cfg.guidance.port);
      cfg.guidance.path = get_str(g, "path", cfg.guidance.path);
    } else {
      throw ConfigError("config: guidance mode must be 'mock' or 'external'");
    }
  } else {
    throw ConfigError("config: 'guidance' section is required");
  }

  if (root.contains("transfer")) {
    const json& t = root.at("transfer");
    cfg.transfer.iterations = get_int(t, "iterations", cfg.transfer.iterations);
    cfg.transfer.lr_center = get_num(t, "lr_center", cfg.transfer.lr_center);
    cfg.transfer.lr_scale = get_num(t, "lr_scale", cfg.transfer.lr_scale);
    cfg.transfer.lambda_fitting =
        get_num(t, "lambda_fitting", cfg.transfer.lambda_fitting);
    cfg.transfer.lambda_similarity =
        get_num(t, "lambda_similarity", cfg.transfer.lambda_similarity);
    cfg.transfer.lambda_visibility =
        get_num(t, "lambda_visibility", cfg.transfer.lambda_visibility);
    cfg.transfer.delta_occ = get_num(t, "delta_occ", cfg.transfer.delta_occ);
    cfg.transfer.cameras = get_int(t, "cameras", cfg.transfer.cameras);
    cfg.transfer.seed = static_cast<std::uint64_t>(get_num(t, "seed", 0.0));
  }

  if (root.contains("checkpoint")) {
    const json& c = root.at("checkpoint");
    cfg.checkpoint.every = get_int(c, "every", cfg.checkpoint.every);
    cfg.checkpoint.views = get_int(c, "views", cfg.checkpoint.views);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path);
}

void derive_seeds(RunConfig& config) {
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    auto& layer = config.layers[i];
    if (layer.coarse.seed == 0) {
      layer.coarse.seed = fold_seed(config.seed, i * 4 + 1);
    }
    if (layer.fine.seed == 0) {
      layer.fine.seed = fold_seed(config.seed, i * 4 + 2);
    }
  }
  if (config.transfer.seed == 0) {
    config.transfer.seed = fold_seed(config.seed, 0xF17);
  }
}

std::vector<ReferenceView> load_reference_views(const std::string& dir) {
  const fs::path base(dir);
  if (!fs::exists(base)) {
    throw ConfigError("reference views: directory does not exist: " + dir);
  }
  const fs::path manifest = base / "cameras.json";
  if (!fs::exists(manifest)) {
    throw ConfigError("reference views: missing manifest: " +
                      manifest.string());
  }
  std::ifstream f(manifest);
  json root;
  try {
    root = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("reference views: " + manifest.string() + ": " +
                      e.what());
  }
  RigSpec rig;
  rig.width = get_int(root, "width", rig.width);
  rig.height = get_int(root, "height", rig.height);
  rig.fov_deg = get_num(root, "fov_deg", rig.fov_deg);

  std::vector<ReferenceView> views;
  for (const auto& v : root.value("views", json::array())) {
    ReferenceView view;
    view.id = get_str(v, "id", "view_" + std::to_string(views.size()));
    view.camera = view_camera(v, rig, {});
    const fs::path img = base / get_str(v, "image", view.id + ".pfm");
    if (!fs::exists(img)) {
      throw ConfigError("reference views: missing image: " + img.string());
    }
    view.target = read_pfm(img.string());
    if (view.target.width() != rig.width ||
        view.target.height() != rig.height || view.target.channels() != 3) {
      throw ConfigError("reference views: " + img.string() +
                        " does not match the rig resolution");
    }
    views.push_back(std::move(view));
  }
  if (views.empty()) {
    throw ConfigError("reference views: manifest lists no views: " +
                      manifest.string());
  }
  return views;
}

void save_reference_views(const std::string& dir,
                          const std::vector<ReferenceView>& views) {
  if (views.empty()) {
    throw std::invalid_argument("save_reference_views: empty view set");
  }
  fs::create_directories(dir);
  json root;
  root["width"] = views[0].camera.width;
  root["height"] = views[0].camera.height;
  root["fov_deg"] = views[0].camera.vertical_fov * 180.0 / M_PI;
  json list = json::array();
  for (const auto& v : views) {
    json entry;
    entry["id"] = v.id;
    entry["position"] = {v.camera.position.x(), v.camera.position.y(),
                         v.camera.position.z()};
    entry["look_at"] = {v.camera.look_at.x(), v.camera.look_at.y(),
                        v.camera.look_at.z()};
    entry["image"] = v.id + ".pfm";
    list.push_back(entry);
    write_pfm((fs::path(dir) / (v.id + ".pfm")).string(), v.target);
  }
  root["views"] = list;
  std::ofstream f((fs::path(dir) / "cameras.json").string());
  f << root.dump(2) << "\n";
  if (!f) throw ConfigError("save_reference_views: write failed in " + dir);
}

}  // namespace lgs
