// layergs CLI: generate layered Gaussian avatars, transfer garments between
// them, render assets and inspect their contents.
//
// Exit codes: 0 success, 2 invalid configuration or arguments,
// 3 optimization divergence, 1 anything else.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "layergs/asset.hpp"
#include "layergs/backend_wire.hpp"
#include "layergs/config.hpp"
#include "layergs/errors.hpp"
#include "layergs/image_io.hpp"
#include "layergs/losses.hpp"
#include "layergs/pipeline.hpp"
#include "layergs/render.hpp"

namespace fs = std::filesystem;
using namespace lgs;

namespace {

struct Selection {
  std::vector<int> layers;
};

// Accepted forms: "2", "1..3", "1,3". The prefix form "1..m" reproduces
// the global view; a single index is the local view.
Selection parse_selection(const std::string& text, int layer_count) {
  Selection sel;
  if (text.empty()) throw ConfigError("layer selection is empty");
  auto add = [&](int v) {
    if (v < 1 || v > layer_count) {
      throw ConfigError("layer selection: index " + std::to_string(v) +
                        " outside 1.." + std::to_string(layer_count));
    }
    sel.layers.push_back(v);
  };
  const auto range_pos = text.find("..");
  if (range_pos != std::string::npos) {
    try {
      const int lo = std::stoi(text.substr(0, range_pos));
      const int hi = std::stoi(text.substr(range_pos + 2));
      if (hi < lo) throw ConfigError("layer selection: empty range " + text);
      for (int v = lo; v <= hi; ++v) add(v);
    } catch (const std::invalid_argument&) {
      throw ConfigError("layer selection: bad range syntax '" + text + "'");
    }
    return sel;
  }
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const std::string tok =
        text.substr(pos, comma == std::string::npos ? text.size() - pos
                                                    : comma - pos);
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      add(v);
    } catch (const std::invalid_argument&) {
      throw ConfigError("layer selection: bad syntax '" + text + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (sel.layers.empty()) throw ConfigError("layer selection is empty");
  return sel;
}

std::unique_ptr<GuidanceBackend> make_backend(
    const RunConfig& cfg, std::vector<ReferenceView>* rig_out) {
  if (cfg.guidance.mode == GuidanceSelect::Mode::mock) {
    auto views = load_reference_views(cfg.guidance.reference_dir);
    *rig_out = views;
    return std::make_unique<MockBackend>(std::move(views));
  }
  return std::make_unique<HttpBackend>(cfg.guidance.host, cfg.guidance.port,
                                       cfg.guidance.path);
}

PointSet select_points(const LayeredAvatar& avatar, const Selection& sel) {
  PointSet set;
  for (const int m : sel.layers) {
    const GaussianLayer& layer = avatar.layer(m);
    for (std::size_t i = 0; i < layer.points.size(); ++i) {
      set.points.push_back(layer.points[i]);
      set.refs.push_back({layer.layer_index, static_cast<int>(i)});
    }
  }
  return set;
}

void render_asset_views(const LayeredAvatar& avatar, const Selection& sel,
                        int views, int width, int height,
                        const std::string& out_dir) {
  fs::create_directories(out_dir);
  const PointSet set = select_points(avatar, sel);

  // Frame the selected points: orbit around their bounding box.
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e30);
  Eigen::Vector3d hi = -lo;
  for (const auto& p : set.points) {
    lo = lo.cwiseMin(p.center);
    hi = hi.cwiseMax(p.center);
  }
  if (set.points.empty()) throw ConfigError("selection has no points");
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  const double extent = std::max((hi - lo).norm(), 0.5);

  RenderOptions opts;
  for (int v = 0; v < views; ++v) {
    Camera cam;
    const double az = 2.0 * M_PI * v / views;
    const double el = 10.0 * M_PI / 180.0;
    cam.position = center + 2.5 * extent *
                                Eigen::Vector3d(std::sin(az) * std::cos(el),
                                                std::sin(el),
                                                std::cos(az) * std::cos(el));
    cam.look_at = center;
    cam.width = width;
    cam.height = height;
    const RenderOutput out = render(set, cam, opts);

    char tag[32];
    std::snprintf(tag, sizeof(tag), "view_%03d", v);
    const std::string base = out_dir + "/" + tag;
    write_png(base + "_color.png", out.color);
    write_png(base + "_mask.png", out.alpha_mask);
    write_pfm(base + "_color.pfm", out.color);
    write_pfm(base + "_depth.pfm", out.depth);
    write_pfm(base + "_opacity.pfm", out.opacity_map);
  }
}

int cmd_generate(const std::string& config_path,
                 std::optional<std::uint64_t> seed_override,
                 std::optional<std::string> out_override) {
  RunConfig cfg = load_run_config(config_path);
  if (seed_override) cfg.seed = *seed_override;
  if (out_override) cfg.output_dir = *out_override;
  derive_seeds(cfg);

  std::vector<ReferenceView> rig;
  auto backend = make_backend(cfg, &rig);

  const ProxyBody body = ProxyBody::default_body(cfg.shape);
  GeneratorOptions gopts;
  gopts.render = cfg.render_options;
  gopts.rig = cfg.rig;
  gopts.checkpoint_every = cfg.checkpoint.every;
  gopts.turntable_views = cfg.checkpoint.views;
  fs::create_directories(cfg.output_dir);
  gopts.checkpoint_dir = cfg.output_dir + "/checkpoints";
  if (cfg.checkpoint.every == 0) gopts.checkpoint_dir.clear();

  Generator gen(body, *backend, gopts, rig);
  LayeredAvatar avatar;
  avatar.body_prompt = cfg.body_prompt;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    std::cout << "generating layer " << (i + 1) << " (\""
              << cfg.layers[i].prompt << "\")\n";
    gen.generate_layer(avatar, static_cast<int>(i + 1), cfg.layers[i]);
  }

  // The asset is the deliverable; renders come from its (f32) contents so
  // a reload reproduces them bit-exactly.
  avatar = quantized_to_f32(avatar);
  const std::string asset_path = cfg.output_dir + "/avatar.gsa";
  save_asset(asset_path, avatar);
  std::cout << "wrote " << asset_path << "\n";

  Selection all;
  for (std::size_t i = 0; i < avatar.layers.size(); ++i) {
    all.layers.push_back(static_cast<int>(i + 1));
  }
  render_asset_views(avatar, all, cfg.checkpoint.views, cfg.rig.width,
                     cfg.rig.height, cfg.output_dir + "/turntable");
  // Per-layer local views make the decomposition inspectable.
  for (std::size_t i = 0; i < avatar.layers.size(); ++i) {
    Selection one;
    one.layers.push_back(static_cast<int>(i + 1));
    render_asset_views(avatar, one, cfg.checkpoint.views, cfg.rig.width,
                       cfg.rig.height,
                       cfg.output_dir + "/layer" + std::to_string(i + 1));
  }
  return 0;
}

int cmd_transfer(const std::string& source_path, const std::string& target_path,
                 int layer_index, const std::string& config_path,
                 std::optional<std::uint64_t> seed_override,
                 const std::string& out_path) {
  RunConfig cfg = load_run_config(config_path);
  if (seed_override) cfg.seed = *seed_override;
  derive_seeds(cfg);

  const LayeredAvatar source = load_asset(source_path);
  LayeredAvatar target = load_asset(target_path);
  if (layer_index < 1 || layer_index > static_cast<int>(source.layers.size())) {
    throw ConfigError("transfer: source has no layer " +
                      std::to_string(layer_index));
  }

  const ProxyBody target_body = ProxyBody::default_body(cfg.shape);
  TransferResult res =
      transfer_garment(source.layer(layer_index), target, target_body,
                       cfg.transfer, cfg.render_options, cfg.rig);

  res.layer.layer_index =
      target.layers.empty() ? 1 : target.layers.back().layer_index + 1;
  target.layers.push_back(std::move(res.layer));
  target = quantized_to_f32(target);
  save_asset(out_path, target);
  std::cout << "fitting loss " << res.metrics.initial_fitting << " -> "
            << res.metrics.final_fitting << ", visibility "
            << res.metrics.final_visibility << ", depth-ssim "
            << res.metrics.final_similarity << "\n"
            << "wrote " << out_path << "\n";
  return 0;
}

int cmd_render(const std::string& asset_path, const std::string& selection,
               int views, const std::string& resolution,
               const std::string& out_dir) {
  const LayeredAvatar avatar = load_asset(asset_path);
  const Selection sel =
      parse_selection(selection, static_cast<int>(avatar.layers.size()));
  int w = 512, h = 512;
  if (!resolution.empty()) {
    const auto x = resolution.find('x');
    if (x == std::string::npos) {
      throw ConfigError("--resolution must look like 512x512");
    }
    try {
      w = std::stoi(resolution.substr(0, x));
      h = std::stoi(resolution.substr(x + 1));
    } catch (const std::exception&) {
      throw ConfigError("--resolution must look like 512x512");
    }
    if (w < 1 || h < 1) throw ConfigError("--resolution must be positive");
  }
  render_asset_views(avatar, sel, views, w, h, out_dir);
  std::cout << "wrote " << views << " views to " << out_dir << "\n";
  return 0;
}

int cmd_inspect(const std::string& asset_path) {
  std::cout << asset_toc(asset_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered Gaussian-splatting avatars: generation, garment "
               "transfer, rendering"};
  app.require_subcommand(1);

  std::string config_path, asset_path, source_path, target_path;
  std::string selection = "1..1", resolution, out_path = "out";
  int views = 8, layer_index = 2;
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto* gen = app.add_subcommand("generate", "Generate an avatar from a config");
  gen->add_option("--config", config_path, "Run config (JSON)")->required();
  gen->add_option("--seed", seed, "Override the run seed")
      ->each([&](const std::string&) { seed_set = true; });
  gen->add_option("--out", out_path, "Output directory override");

  auto* tra = app.add_subcommand("transfer", "Re-fit a garment onto another avatar");
  tra->add_option("source", source_path, "Source asset (.gsa)")->required();
  tra->add_option("target", target_path, "Target asset (.gsa)")->required();
  tra->add_option("--layer", layer_index, "Source garment layer index")
      ->required();
  tra->add_option("--config", config_path, "Run config (JSON)")->required();
  tra->add_option("--seed", seed, "Override the run seed")
      ->each([&](const std::string&) { seed_set = true; });
  tra->add_option("--out", out_path, "Output asset path")->required();

  auto* ren = app.add_subcommand("render", "Render a layer selection of an asset");
  ren->add_option("asset", asset_path, "Asset (.gsa)")->required();
  ren->add_option("--layers", selection,
                  "Selection: '2', '1..3', or '1,3'")->required();
  ren->add_option("--views", views, "Turntable view count");
  ren->add_option("--resolution", resolution, "WxH (default 512x512)");
  ren->add_option("--out", out_path, "Output directory");

  auto* ins = app.add_subcommand("inspect", "Print an asset's table of contents");
  ins->add_option("asset", asset_path, "Asset (.gsa)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_generate(config_path,
                          seed_set ? std::optional<std::uint64_t>(seed)
                                   : std::nullopt,
                          gen->count("--out")
                              ? std::optional<std::string>(out_path)
                              : std::nullopt);
    }
    if (tra->parsed()) {
      return cmd_transfer(source_path, target_path, layer_index, config_path,
                          seed_set ? std::optional<std::uint64_t>(seed)
                                   : std::nullopt,
                          out_path);
    }
    if (ren->parsed()) {
      return cmd_render(asset_path, selection, views, resolution, out_path);
    }
    if (ins->parsed()) {
      return cmd_inspect(asset_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const AssetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
