#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "layergs/backend_wire.hpp"
#include "layergs/guidance.hpp"
#include "layergs/pipeline.hpp"
#include "testing_util.hpp"

// httplib pulls in resolv.h, whose macros collide with Eigen internals;
// keep it after every Eigen-dependent header.
#include <httplib.h>

using namespace lgs;
using lgs::testing::simple_camera;

namespace {

Image constant_image(int w, int h, int ch, double v) {
  return Image(w, h, ch, v);
}

/// Reference view whose target is a gradient pattern.
ReferenceView patterned_view(const std::string& id, int res) {
  ReferenceView view;
  view.id = id;
  view.camera = simple_camera(res);
  view.target = Image(res, res, 3);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      view.target.at(y, x, 0) = static_cast<double>(x) / res;
      view.target.at(y, x, 1) = static_cast<double>(y) / res;
      view.target.at(y, x, 2) = 0.25;
    }
  }
  return view;
}

RenderOutput fake_render(const Image& color) {
  RenderOutput out;
  out.color = color;
  out.opacity_map = Image(color.width(), color.height(), 1, 1.0);
  out.depth = Image(color.width(), color.height(), 1, 4.0);
  out.alpha_mask = Image(color.width(), color.height(), 1, 1.0);
  return out;
}

struct ThrowingBackend : GuidanceBackend {
  Image predict_noise(const Image&, const GuidanceContext&, int,
                      const NoiseSchedule&, std::uint64_t) const override {
    throw std::runtime_error("backend exploded");
  }
};

}  // namespace

TEST_CASE("noise schedule: cosine satisfies the variance-preserving "
          "identity and monotonicity") {
  const NoiseSchedule s = NoiseSchedule::cosine(1000);
  REQUIRE(s.alpha.size() == 1000);
  for (int t = 0; t < 1000; ++t) {
    CHECK(std::fabs(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t] - 1.0) <
          1e-12);
    CHECK(s.weight[t] > 0.0);
    if (t > 0) CHECK(s.alpha[t] <= s.alpha[t - 1]);
  }
}

TEST_CASE("noise schedule: construction validates the invariants") {
  CHECK_THROWS_AS(NoiseSchedule(2, {1.0, 0.9}, {0.5, 0.436}, {1.0, 1.0}),
                  std::invalid_argument);  // alpha^2+sigma^2 != 1
  CHECK_THROWS_AS(NoiseSchedule(2, {0.6, 0.8}, {0.8, 0.6}, {1.0, 1.0}),
                  std::invalid_argument);  // alpha increasing
  CHECK_THROWS_AS(
      NoiseSchedule(2, {0.8, 0.6}, {0.6, 0.8}, {1.0}),
      std::invalid_argument);  // length mismatch
  CHECK_NOTHROW(NoiseSchedule(2, {0.8, 0.6}, {0.6, 0.8}, {0.0, 0.0}));
}

TEST_CASE("mock backend: exact target render gives exactly zero gradient") {
  const ReferenceView view = patterned_view("cam0", 16);
  MockBackend backend({view});
  const NoiseSchedule schedule = NoiseSchedule::cosine(1000);
  GuidanceContext ctx{"prompt", {}, "cam0"};
  for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    const SdsSample s =
        sds_grad(fake_render(view.target), backend, ctx, schedule, seed);
    // eps_hat == eps algebraically; float addition in the noising leaves
    // a rounding residue that w_t amplifies to ~1e-15 at late timesteps.
    for (const double v : s.grad.raw()) CHECK(std::fabs(v) < 1e-13);
  }
}

TEST_CASE("sds_grad: zero weight at the sampled timestep gives zero "
          "gradient") {
  const ReferenceView view = patterned_view("cam0", 8);
  MockBackend backend({view});
  NoiseSchedule zero_w = NoiseSchedule::cosine(100);
  std::fill(zero_w.weight.begin(), zero_w.weight.end(), 0.0);
  const Image off = constant_image(8, 8, 3, 0.9);
  const SdsSample s =
      sds_grad(fake_render(off), backend, {"p", {}, "cam0"}, zero_w, 7);
  for (const double v : s.grad.raw()) CHECK(v == 0.0);
}

TEST_CASE("mock backend: constant offset reduces to w*alpha/sigma * delta") {
  const int res = 8;
  ReferenceView view;
  view.id = "c";
  view.camera = simple_camera(res);
  view.target = constant_image(res, res, 3, 0.3);
  MockBackend backend({view});
  const NoiseSchedule schedule = NoiseSchedule::cosine(500);
  const double delta = 0.17;
  const Image c = constant_image(res, res, 3, 0.3 + delta);

  for (std::uint64_t seed : {4ULL, 11ULL, 12345ULL}) {
    const SdsSample s =
        sds_grad(fake_render(c), backend, {"p", {}, "c"}, schedule, seed);
    const double w = schedule.weight[static_cast<std::size_t>(s.t)];
    const double expect = w * schedule.alpha[static_cast<std::size_t>(s.t)] /
                          schedule.sigma[static_cast<std::size_t>(s.t)] *
                          delta;
    for (const double v : s.grad.raw()) {
      CHECK(v == doctest::Approx(expect).epsilon(1e-9));
    }
    // With the cosine schedule's weight sigma/alpha this is delta itself.
    CHECK(expect == doctest::Approx(delta).epsilon(1e-12));
  }
}

TEST_CASE("mock backend: gradient is colinear with (c - target) per pixel") {
  const ReferenceView view = patterned_view("cam0", 12);
  MockBackend backend({view});
  const NoiseSchedule schedule = NoiseSchedule::cosine(1000);
  Rng rng(5);
  Image c(12, 12, 3);
  for (double& v : c.raw()) v = rng.uniform(0.0, 1.0);

  SdsOptions near_zero_t;
  near_zero_t.t_min_frac = 0.02;
  near_zero_t.t_max_frac = 0.03;  // small sigma_t regime
  const SdsSample s = sds_grad(fake_render(c), backend, {"p", {}, "cam0"},
                               schedule, 31, near_zero_t);
  int sign_matches = 0, counted = 0;
  double ratio = 0.0;
  bool ratio_set = false;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double diff = c.raw()[i] - view.target.raw()[i];
    if (std::fabs(diff) < 1e-9) continue;
    ++counted;
    if ((s.grad.raw()[i] > 0) == (diff > 0)) ++sign_matches;
    const double r = s.grad.raw()[i] / diff;
    if (!ratio_set) {
      ratio = r;
      ratio_set = true;
    }
    CHECK(r == doctest::Approx(ratio).epsilon(1e-9));  // exact colinearity
  }
  REQUIRE(counted > 300);
  CHECK(static_cast<double>(sign_matches) / counted >= 0.99);
}

TEST_CASE("sds_grad: bit-reproducible for a fixed seed") {
  const ReferenceView view = patterned_view("cam0", 10);
  MockBackend backend({view});
  const NoiseSchedule schedule = NoiseSchedule::cosine(1000);
  const Image c = constant_image(10, 10, 3, 0.6);
  const SdsSample a =
      sds_grad(fake_render(c), backend, {"p", {}, "cam0"}, schedule, 77);
  const SdsSample b =
      sds_grad(fake_render(c), backend, {"p", {}, "cam0"}, schedule, 77);
  CHECK(a.t == b.t);
  CHECK(max_abs_diff(a.grad, b.grad) == 0.0);
  const SdsSample other =
      sds_grad(fake_render(c), backend, {"p", {}, "cam0"}, schedule, 78);
  CHECK((other.t != a.t || max_abs_diff(a.grad, other.grad) > 0.0));
}

TEST_CASE("mock backend: lookup and shape errors") {
  const ReferenceView view = patterned_view("cam0", 8);
  MockBackend backend({view});
  CHECK_THROWS_AS(backend.target("nope"), std::out_of_range);
  CHECK_THROWS_AS(MockBackend({}), std::invalid_argument);

  ReferenceView bad = patterned_view("x", 8);
  bad.target = Image(4, 4, 3);
  CHECK_THROWS_AS(MockBackend({bad}), std::invalid_argument);
}

TEST_CASE("sds_grad: backend failure propagates with context") {
  ThrowingBackend backend;
  const NoiseSchedule schedule = NoiseSchedule::cosine(100);
  const Image c = constant_image(8, 8, 3, 0.5);
  try {
    sds_grad(fake_render(c), backend, {"p", {}, "camX"}, schedule, 3);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("camX") != std::string::npos);
    CHECK(msg.find("backend exploded") != std::string::npos);
  }
}

TEST_CASE("dual_sds_grad: lambda_global = 0 equals scaled plain sds") {
  const ReferenceView view = patterned_view("cam0", 10);
  MockBackend backend({view});
  const NoiseSchedule schedule = NoiseSchedule::cosine(1000);
  const Image c = constant_image(10, 10, 3, 0.8);
  const RenderOutput local = fake_render(c), global = fake_render(c);
  GuidanceContext ctx{"p", {}, "cam0"};

  const DualSdsSample dual = dual_sds_grad(local, global, backend, ctx, ctx,
                                           schedule, 0.7, 0.0, 991);
  const SdsSample plain =
      sds_grad(local, backend, ctx, schedule, fold_seed(991, 0));
  for (std::size_t i = 0; i < dual.grad_local.size(); ++i) {
    CHECK(dual.grad_local.raw()[i] ==
          doctest::Approx(0.7 * plain.grad.raw()[i]).epsilon(1e-12));
  }
  for (const double v : dual.grad_global.raw()) CHECK(v == 0.0);
}

TEST_CASE("dual_sds_grad: both lambdas zero give a zero update") {
  const ReferenceView view = patterned_view("cam0", 8);
  MockBackend backend({view});
  const NoiseSchedule schedule = NoiseSchedule::cosine(100);
  const RenderOutput r = fake_render(constant_image(8, 8, 3, 0.1));
  const DualSdsSample dual =
      dual_sds_grad(r, r, backend, {"p", {}, "cam0"}, {"p", {}, "cam0"},
                    schedule, 0.0, 0.0, 5);
  for (const double v : dual.grad_local.raw()) CHECK(v == 0.0);
  for (const double v : dual.grad_global.raw()) CHECK(v == 0.0);
  CHECK_THROWS_AS(dual_sds_grad(r, r, backend, {"p", {}, "cam0"},
                                {"p", {}, "cam0"}, schedule, -1.0, 0.0, 5),
                  std::invalid_argument);
}

TEST_CASE("project_skeleton: center joint, off-screen flag, symmetry") {
  const ProxyBody body = ProxyBody::default_body();

  Camera cam;  // front view at the body center
  cam.position = body.center() + Eigen::Vector3d(0.0, 0.0, 4.0);
  cam.look_at = body.center();
  cam.width = cam.height = 200;

  const auto joints = project_skeleton(body, cam);
  CHECK(joints.size() == body.joint_names().size());

  // A joint at the look_at target projects to the image center.
  Camera at_pelvis = cam;
  at_pelvis.look_at = body.joint("pelvis");
  at_pelvis.position = body.joint("pelvis") + Eigen::Vector3d(0.0, 0.0, 4.0);
  for (const auto& j : project_skeleton(body, at_pelvis)) {
    if (j.name == "pelvis") {
      CHECK(j.on_screen);
      CHECK(j.pixel.x() == doctest::Approx(100.0).epsilon(1e-6));
      CHECK(j.pixel.y() == doctest::Approx(100.0).epsilon(1e-6));
    }
  }

  // Behind the camera: flagged off-screen.
  Camera behind = cam;
  behind.position = body.center() - Eigen::Vector3d(0.0, 0.0, 4.0);
  behind.look_at = behind.position - Eigen::Vector3d(0.0, 0.0, 4.0);
  const auto back_joints = project_skeleton(body, behind);
  for (const auto& j : back_joints) CHECK(!j.on_screen);

  // Shoulder symmetry about the vertical center line, within a pixel.
  double lx = -1, rx = -1;
  for (const auto& j : joints) {
    if (j.name == "l_shoulder") lx = j.pixel.x();
    if (j.name == "r_shoulder") rx = j.pixel.x();
  }
  CHECK(std::fabs((lx - 100.0) + (rx - 100.0)) < 1.0);
}

TEST_CASE("backend wire: request and response round-trip") {
  BackendRequest req;
  req.image = Image(6, 4, 3);
  Rng rng(8);
  for (double& v : req.image.raw()) {
    v = static_cast<float>(rng.uniform(0.0, 1.0));
  }
  req.prompt = "a red jacket";
  req.camera_id = "view_003";
  req.t = 451;
  req.seed = 0xDEADBEEF;
  req.skeleton.push_back({"pelvis", {12.5, 33.0}, true});
  req.skeleton.push_back({"head", {-4.0, 7.0}, false});

  const BackendRequest back = decode_request(encode_request(req));
  CHECK(back.prompt == req.prompt);
  CHECK(back.camera_id == req.camera_id);
  CHECK(back.t == req.t);
  CHECK(back.seed == req.seed);
  REQUIRE(back.skeleton.size() == 2);
  CHECK(back.skeleton[0].name == "pelvis");
  CHECK(back.skeleton[0].pixel == req.skeleton[0].pixel);
  CHECK(back.skeleton[1].on_screen == false);
  CHECK(max_abs_diff(back.image, req.image) == 0.0);  // f32 payload, exact

  Image noise(6, 4, 3);
  for (double& v : noise.raw()) v = static_cast<float>(rng.normal());
  const Image back_noise = decode_response(encode_response(noise));
  CHECK(max_abs_diff(back_noise, noise) == 0.0);

  CHECK_THROWS(decode_request(std::string("\x02\x00\x00\x00{}", 6)));
  CHECK_THROWS(decode_response(encode_request(req)));
}

TEST_CASE("http backend: round-trips through a local server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/denoise", [&](const httplib::Request& in, httplib::Response& out) {
    const BackendRequest req = decode_request(in.body);
    ++hits;
    // Deterministic stub: noise = 0.5 - image.
    Image noise(req.image.width(), req.image.height(), 3);
    for (std::size_t i = 0; i < noise.size(); ++i) {
      noise.raw()[i] = 0.5 - req.image.raw()[i];
    }
    out.set_content(encode_response(noise), "application/octet-stream");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackend backend("127.0.0.1", port);
  const NoiseSchedule schedule = NoiseSchedule::cosine(100);
  Image c(5, 5, 3, 0.25f);
  GuidanceContext ctx{"prompt", {{"head", {1.0, 2.0}, true}}, "camZ"};
  const Image noise = backend.predict_noise(c, ctx, 42, schedule, 9);
  REQUIRE(noise.same_shape(c));
  for (const double v : noise.raw()) CHECK(v == doctest::Approx(0.25));
  CHECK(hits.load() == 1);

  server.stop();
  worker.join();
}
