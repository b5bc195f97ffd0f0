#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "layergs/asset.hpp"
#include "layergs/body.hpp"
#include "layergs/config.hpp"
#include "layergs/image_io.hpp"
#include "layergs/pipeline.hpp"
#include "layergs/render.hpp"
#include "layergs/rng.hpp"
#include "layergs/types.hpp"

using namespace lgs;
namespace fs = std::filesystem;

namespace {

std::string g_cli_path;  // set from the --cli-path= argument in main

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = g_cli_path + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = pclose(pipe);
  RunResult res;
  res.output = out;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("layergs_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Writes a tiny mock run setup: reference views of a textured body and a
/// minimal config pointing at them.
std::string write_tiny_config(const TempDir& tmp, int res = 32,
                              int iters = 2) {
  const ProxyBody body = ProxyBody::default_body();
  RigSpec rig;
  rig.width = rig.height = res;
  GaussianLayer truth;
  truth.layer_index = 1;
  for (const auto& c : sample_surface(body, 400, 0.0, 3)) {
    GaussianPoint p;
    p.center = c;
    p.log_scale = Eigen::Vector3d::Constant(std::log(0.03));
    p.color_logit = {0.5, -0.5, 0.2};
    p.opacity_logit = inverse_sigmoid(0.8);
    truth.points.push_back(p);
  }
  std::vector<ReferenceView> views;
  for (int v = 0; v < 3; ++v) {
    ReferenceView view;
    view.id = "view_" + std::to_string(v);
    view.camera = rig_camera(rig, body, 2.0 * M_PI * v / 3, 0.15);
    view.target = render(PointSet::from_layer(truth), view.camera).color;
    views.push_back(std::move(view));
  }
  save_reference_views(tmp.file("refs"), views);

  std::ostringstream cfg;
  cfg << R"({
    "seed": 5,
    "output_dir": ")" << tmp.file("out") << R"(",
    "render": {"width": )" << res << R"(, "height": )" << res << R"(},
    "body": {"prompt": "test person"},
    "guidance": {"mode": "mock", "reference_dir": ")" << tmp.file("refs")
      << R"("},
    "layers": [{"prompt": "test person", "points": 150,
                "coarse": {"iterations": )" << iters << R"(},
                "fine": {"iterations": )" << iters
      << R"(, "densify_rounds": 1}}],
    "checkpoint": {"views": 2}
  })";
  const std::string path = tmp.file("run.json");
  std::ofstream(path) << cfg.str();
  return path;
}

}  // namespace

TEST_CASE("cli: no subcommand or bad flags exit 2-ish with usage") {
  const RunResult none = run_cli("");
  CHECK(none.exit_code != 0);
  const RunResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("generate") != std::string::npos);
  CHECK(help.output.find("transfer") != std::string::npos);
  CHECK(help.output.find("render") != std::string::npos);
  CHECK(help.output.find("inspect") != std::string::npos);
}

TEST_CASE("cli: generate produces an asset plus turntable and per-layer "
          "renders; rerun is byte-identical; render matches bit-exactly") {
  TempDir tmp;
  const std::string cfg = write_tiny_config(tmp);
  const RunResult r1 = run_cli("generate --config " + cfg);
  INFO(r1.output);
  REQUIRE(r1.exit_code == 0);

  const std::string asset = tmp.file("out/avatar.gsa");
  CHECK(fs::exists(asset));
  CHECK(fs::exists(tmp.file("out/turntable/view_000_color.png")));
  CHECK(fs::exists(tmp.file("out/turntable/view_001_depth.pfm")));
  CHECK(fs::exists(tmp.file("out/layer1/view_000_color.png")));

  // Reproducibility across processes and worker counts.
  const std::string bytes1 = read_bytes(asset);
  const RunResult r2 =
      run_cli("generate --config " + cfg + " --out " + tmp.file("out2"));
  REQUIRE(r2.exit_code == 0);
  CHECK(read_bytes(tmp.file("out2/avatar.gsa")) == bytes1);

  // A downstream render of the asset reproduces the emitted views
  // bit-exactly (the asset, not the in-memory state, is the deliverable).
  const LayeredAvatar loaded = load_asset(asset);
  const RunResult r3 = run_cli("render " + asset + " --layers 1..1 --views 2" +
                               " --resolution 32x32 --out " +
                               tmp.file("re_render"));
  REQUIRE(r3.exit_code == 0);
  CHECK(read_bytes(tmp.file("re_render/view_000_color.pfm")) ==
        read_bytes(tmp.file("out/turntable/view_000_color.pfm")));

  // Different seed changes the result.
  const RunResult r4 = run_cli("generate --config " + cfg + " --seed 99 --out " +
                               tmp.file("out3"));
  REQUIRE(r4.exit_code == 0);
  CHECK(read_bytes(tmp.file("out3/avatar.gsa")) != bytes1);
}

TEST_CASE("cli: generate with a missing reference dir exits 2 naming the "
          "path") {
  TempDir tmp;
  std::ofstream(tmp.file("bad.json")) << R"({
    "guidance": {"mode": "mock", "reference_dir": ")" << tmp.file("absent")
      << R"("},
    "layers": [{"prompt": "x", "coarse": {"iterations": 0},
                "fine": {"iterations": 0}}]
  })";
  const RunResult r = run_cli("generate --config " + tmp.file("bad.json"));
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("absent") != std::string::npos);

  const RunResult missing = run_cli("generate --config " + tmp.file("no.json"));
  CHECK(missing.exit_code == 2);
}

TEST_CASE("cli: render validates selections and inspect prints the TOC") {
  TempDir tmp;
  LayeredAvatar avatar;
  Rng rng(44);
  for (int m = 1; m <= 2; ++m) {
    GaussianLayer layer;
    layer.layer_index = m;
    layer.prompt = m == 1 ? "base" : "a scarf";
    for (int i = 0; i < 40; ++i) {
      GaussianPoint p;
      p.center = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                  rng.uniform(-0.5, 0.5)};
      p.log_scale = Eigen::Vector3d::Constant(std::log(0.05));
      layer.points.push_back(p);
    }
    avatar.layers.push_back(layer);
  }
  const std::string asset = tmp.file("a.gsa");
  save_asset(asset, avatar);

  const RunResult ins = run_cli("inspect " + asset);
  CHECK(ins.exit_code == 0);
  CHECK(ins.output.find("a scarf") != std::string::npos);
  CHECK(ins.output.find("40 points") != std::string::npos);

  CHECK(run_cli("render " + asset + " --layers 2 --views 1 --out " +
                tmp.file("r1")).exit_code == 0);
  CHECK(fs::exists(tmp.file("r1/view_000_color.png")));
  CHECK(fs::exists(tmp.file("r1/view_000_mask.png")));
  CHECK(fs::exists(tmp.file("r1/view_000_opacity.pfm")));

  CHECK(run_cli("render " + asset + " --layers 1..2 --views 1 --out " +
                tmp.file("r2")).exit_code == 0);
  CHECK(run_cli("render " + asset + " --layers 1,2 --views 1 --out " +
                tmp.file("r3")).exit_code == 0);
  // Same selection through different syntax renders identical images.
  CHECK(read_bytes(tmp.file("r2/view_000_color.pfm")) ==
        read_bytes(tmp.file("r3/view_000_color.pfm")));

  CHECK(run_cli("render " + asset + " --layers 3 --views 1 --out " +
                tmp.file("rx")).exit_code == 2);
  CHECK(run_cli("render " + asset + " --layers abc --views 1 --out " +
                tmp.file("rx")).exit_code == 2);
  CHECK(run_cli("render " + asset + " --layers '' --views 1 --out " +
                tmp.file("rx")).exit_code == 2);
  CHECK(run_cli("render " + asset + " --layers 1 --resolution bogus --out " +
                tmp.file("rx")).exit_code == 2);
  CHECK(run_cli("render " + tmp.file("missing.gsa") + " --layers 1 --out " +
                tmp.file("rx")).exit_code == 2);
}

TEST_CASE("cli: transfer fits a garment onto a second asset") {
  TempDir tmp;
  const ProxyBody body = ProxyBody::default_body();

  auto make_asset = [&](const std::string& name, double girth,
                        bool with_garment) {
    const ProxyBody b = ProxyBody::default_body({1.0, girth});
    LayeredAvatar avatar;
    avatar.body_prompt = "p";
    GaussianLayer base;
    base.layer_index = 1;
    base.prompt = "body";
    for (const auto& c : sample_surface(b, 400, 0.0, 8)) {
      GaussianPoint p;
      p.center = c;
      p.log_scale = Eigen::Vector3d::Constant(std::log(0.03));
      p.opacity_logit = inverse_sigmoid(0.8);
      base.points.push_back(p);
    }
    avatar.layers.push_back(base);
    if (with_garment) {
      GaussianLayer g;
      g.layer_index = 2;
      g.prompt = "a poncho";
      for (const auto& c : sample_surface(b, 250, 0.04, 9)) {
        GaussianPoint p;
        p.center = c;
        p.log_scale = Eigen::Vector3d::Constant(std::log(0.03));
        p.color_logit = {1.0, 0.0, -1.0};
        p.opacity_logit = inverse_sigmoid(0.8);
        g.points.push_back(p);
      }
      avatar.layers.push_back(g);
    }
    const std::string path = tmp.file(name);
    save_asset(path, avatar);
    return path;
  };

  const std::string source = make_asset("source.gsa", 1.0, true);
  const std::string target = make_asset("target.gsa", 1.15, false);

  std::ofstream(tmp.file("t.json")) << R"({
    "guidance": {"mode": "external", "host": "127.0.0.1", "port": 1},
    "render": {"width": 40, "height": 40},
    "layers": [{"prompt": "unused"}],
    "transfer": {"iterations": 3, "cameras": 3}
  })";

  const std::string out = tmp.file("fitted.gsa");
  const RunResult r = run_cli("transfer " + source + " " + target +
                              " --layer 2 --config " + tmp.file("t.json") +
                              " --out " + out);
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  const LayeredAvatar fitted = load_asset(out);
  REQUIRE(fitted.layers.size() == 2);
  CHECK(fitted.layers[1].prompt == "a poncho");
  CHECK(fitted.layers[1].points.size() == 250);
  // Source files untouched.
  CHECK(load_asset(source).layers.size() == 2);

  // Frozen attributes bit-equal through the CLI path.
  const LayeredAvatar src = load_asset(source);
  for (std::size_t i = 0; i < 250; ++i) {
    CHECK(fitted.layers[1].points[i].rotation ==
          src.layers[1].points[i].rotation);
    CHECK(fitted.layers[1].points[i].color_logit ==
          src.layers[1].points[i].color_logit);
    CHECK(fitted.layers[1].points[i].opacity_logit ==
          src.layers[1].points[i].opacity_logit);
  }

  // Bad layer index exits 2.
  CHECK(run_cli("transfer " + source + " " + target +
                " --layer 7 --config " + tmp.file("t.json") + " --out " +
                tmp.file("x.gsa")).exit_code == 2);
}

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.rfind("--cli-path=", 0) == 0) {
      g_cli_path = arg.substr(std::string("--cli-path=").size());
    }
  }
  if (g_cli_path.empty()) {
    std::fprintf(stderr, "usage: test_cli --cli-path=<layergs binary>\n");
    return 1;
  }
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  return ctx.run();
}
