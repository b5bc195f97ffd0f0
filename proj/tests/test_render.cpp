#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "layergs/errors.hpp"
#include "layergs/parallel.hpp"
#include "layergs/render.hpp"
#include "testing_util.hpp"

using namespace lgs;
using lgs::testing::random_point;
using lgs::testing::random_scene;
using lgs::testing::simple_camera;

namespace {

/// Odd-resolution camera: the principal point coincides with the center
/// pixel's sample position, so an on-axis Gaussian peaks exactly there.
Camera centered_camera(int res = 65, double dist = 4.0) {
  return simple_camera(res, dist);
}

PointSet single_point_set(const GaussianPoint& p) {
  PointSet set;
  set.points.push_back(p);
  set.refs.push_back({1, 0});
  return set;
}

}  // namespace

TEST_CASE("project: on-axis point lands at the image center") {
  Camera cam = simple_camera(512);
  GaussianPoint p;  // at the look_at target
  const auto projected = project({p}, cam);
  REQUIRE(projected.size() == 1);
  CHECK(projected[0].mean2d.x() == doctest::Approx(256.0).epsilon(1e-3));
  CHECK(projected[0].mean2d.y() == doctest::Approx(256.0).epsilon(1e-3));
  CHECK(projected[0].view_depth == doctest::Approx(4.0));
}

TEST_CASE("project: point behind the camera is culled") {
  Camera cam = simple_camera();
  GaussianPoint behind;
  behind.center = {0.0, 0.0, 10.0};  // camera sits at z=4 looking at -z
  GaussianPoint front;
  const auto projected = project({behind, front}, cam);
  REQUIRE(projected.size() == 1);
  CHECK(projected[0].source_index == 1);
}

TEST_CASE("project: isotropic footprint matches f*s/z, and the Jacobian "
          "matches finite differences") {
  Camera cam = simple_camera(64);
  const double s = 0.05;
  GaussianPoint p;
  p.center = {0.3, -0.2, 0.5};
  p.log_scale = Eigen::Vector3d::Constant(std::log(s));

  const auto projected = project({p}, cam);
  REQUIRE(projected.size() == 1);
  const double z = projected[0].view_depth;
  const double f = cam.focal_px();
  const double expect = (f * s / z) * (f * s / z);
  CHECK(projected[0].cov2d(0, 0) - kLowpassFloor ==
        doctest::Approx(expect).epsilon(0.05));
  CHECK(projected[0].cov2d(1, 1) - kLowpassFloor ==
        doctest::Approx(expect).epsilon(0.05));

  // Finite-difference the projection map to get J numerically, then
  // compare J Sigma J^T against the analytic EWA covariance.
  const Eigen::Matrix3d wtc = cam.world_to_camera();
  auto project_uv = [&](const Eigen::Vector3d& cam_pt) {
    return Eigen::Vector2d(f * cam_pt.x() / cam_pt.z() + 0.5 * cam.width,
                           f * cam_pt.y() / cam_pt.z() + 0.5 * cam.height);
  };
  const Eigen::Vector3d mu_cam = wtc * (p.center - cam.position);
  Eigen::Matrix<double, 2, 3> j_fd;
  const double h = 1e-6;
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d dpos = Eigen::Vector3d::Zero();
    dpos[k] = h;
    j_fd.col(k) = (project_uv(mu_cam + dpos) - project_uv(mu_cam - dpos)) /
                  (2.0 * h);
  }
  const Eigen::Matrix3d sigma_cam = wtc * p.covariance() * wtc.transpose();
  const Eigen::Matrix2d cov_fd = j_fd * sigma_cam * j_fd.transpose();
  Eigen::Matrix2d cov_analytic = projected[0].cov2d;
  cov_analytic(0, 0) -= kLowpassFloor;
  cov_analytic(1, 1) -= kLowpassFloor;
  CHECK((cov_fd - cov_analytic).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("project: sorted by view depth with index tie-break") {
  Camera cam = simple_camera();
  std::vector<GaussianPoint> pts(4);
  pts[0].center = {0, 0, -1.0};
  pts[1].center = {0, 0, 1.0};
  pts[2].center = {0.5, 0, 1.0};  // same depth as 1 -> index break
  pts[3].center = {0, 0, 2.0};
  const auto projected = project(pts, cam);
  REQUIRE(projected.size() == 4);
  CHECK(projected[0].source_index == 3);
  CHECK(projected[1].source_index == 1);
  CHECK(projected[2].source_index == 2);
  CHECK(projected[3].source_index == 0);
}

TEST_CASE("project: degenerate camera raises") {
  Camera cam = simple_camera();
  cam.up = {0.0, 0.0, 1.0};  // parallel to the view direction
  GaussianPoint p;
  CHECK_THROWS_AS(project({p}, cam), ConfigError);
}

TEST_CASE("render: single opaque centered Gaussian hits the closed form") {
  Camera cam = centered_camera();
  const auto p = GaussianPoint::from_activated(
      {0, 0, 0}, {0.5, 0.5, 0.5}, {1, 0, 0, 0}, {0.3, 0.6, 0.9}, 1.0);
  const RenderOutput out = render(single_point_set(p), cam);
  const int c = cam.width / 2;
  CHECK(out.color.at(c, c, 0) == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(out.color.at(c, c, 1) == doctest::Approx(0.6).epsilon(1e-8));
  CHECK(out.color.at(c, c, 2) == doctest::Approx(0.9).epsilon(1e-8));
  CHECK(out.opacity_map.at(c, c) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(out.depth.at(c, c) == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(out.alpha_mask.at(c, c) == 1.0);
}

TEST_CASE("render: empty point set gives zero images") {
  const RenderOutput out = render(PointSet{}, simple_camera());
  for (const double v : out.color.raw()) CHECK(v == 0.0);
  for (const double v : out.opacity_map.raw()) CHECK(v == 0.0);
  for (const double v : out.alpha_mask.raw()) CHECK(v == 0.0);
}

TEST_CASE("render: two overlapping Gaussians composite front-to-back") {
  Camera cam = centered_camera();
  const auto front = GaussianPoint::from_activated(
      {0, 0, 0}, {0.4, 0.4, 0.4}, {1, 0, 0, 0}, {1.0, 0.0, 0.0}, 0.6);
  const auto back = GaussianPoint::from_activated(
      {0, 0, -1.0}, {0.4, 0.4, 0.4}, {1, 0, 0, 0}, {0.0, 1.0, 0.0}, 0.3);
  PointSet set;
  set.points = {front, back};
  set.refs = {{1, 0}, {1, 1}};
  const RenderOutput out = render(set, cam);
  const int c = cam.width / 2;
  // sigma1 = 0.6 and sigma2 = 0.3 exactly at both centers.
  CHECK(out.color.at(c, c, 0) == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(out.color.at(c, c, 1) == doctest::Approx(0.3 * 0.4).epsilon(1e-9));
  CHECK(out.opacity_map.at(c, c) == doctest::Approx(0.72).epsilon(1e-9));
  CHECK(out.depth.at(c, c) ==
        doctest::Approx((4.0 * 0.6 + 5.0 * 0.12) / 0.72).epsilon(1e-9));

  // Term-by-term against the oracle everywhere.
  const RenderOutput oracle = oracle_render(set, cam);
  CHECK(max_abs_diff(out.color, oracle.color) < 1e-5);
  CHECK(max_abs_diff(out.opacity_map, oracle.opacity_map) < 1e-5);
  CHECK(max_abs_diff(out.depth, oracle.depth) < 1e-5);
}

TEST_CASE("render vs oracle: random scenes agree everywhere") {
  Rng rng(2024);
  for (int scene = 0; scene < 8; ++scene) {
    const PointSet set = random_scene(rng, 150);
    const Camera cam = simple_camera(64);
    const RenderOutput tiled = render(set, cam);
    const RenderOutput oracle = oracle_render(set, cam);
    CHECK(max_abs_diff(tiled.color, oracle.color) < 1e-5);
    CHECK(max_abs_diff(tiled.opacity_map, oracle.opacity_map) < 1e-5);
    CHECK(max_abs_diff(tiled.depth, oracle.depth) < 1e-5);
    CHECK(max_abs_diff(tiled.alpha_mask, oracle.alpha_mask) == 0.0);
  }
}

TEST_CASE("render: opacity map stays in [0,1], color below 1+1e-6, depth "
          "finite under the mask") {
  Rng rng(77);
  for (int scene = 0; scene < 4; ++scene) {
    // Include near-opaque points to stress the accumulation.
    PointSet set = random_scene(rng, 120);
    for (int i = 0; i < 20; ++i) {
      set.points[static_cast<std::size_t>(i)].opacity_logit = 40.0;
    }
    const RenderOutput out = render(set, simple_camera(48));
    for (const double v : out.opacity_map.raw()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
    for (const double v : out.color.raw()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-6);
    }
    for (std::size_t i = 0; i < out.alpha_mask.size(); ++i) {
      if (out.alpha_mask.raw()[i] != 0.0) {
        CHECK(std::isfinite(out.depth.raw()[i]));
      }
      CHECK((out.alpha_mask.raw()[i] != 0.0) ==
            (out.opacity_map.raw()[i] >= 0.5));
    }
  }
}

TEST_CASE("render: permuting input order leaves images unchanged") {
  Rng rng(5150);
  PointSet set = random_scene(rng, 60);
  const Camera cam = simple_camera(48);
  const RenderOutput base = render(set, cam);

  PointSet shuffled;
  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(rng.uniform_int(0, i - 1))]);
  }
  for (const std::size_t i : order) {
    shuffled.points.push_back(set.points[i]);
    shuffled.refs.push_back(set.refs[i]);
  }
  const RenderOutput perm = render(shuffled, cam);
  CHECK(max_abs_diff(base.color, perm.color) == 0.0);
  CHECK(max_abs_diff(base.opacity_map, perm.opacity_map) == 0.0);
  CHECK(max_abs_diff(base.depth, perm.depth) == 0.0);
}

TEST_CASE("render: rigid translation of scene and camera is invariant") {
  Rng rng(31337);
  PointSet set = random_scene(rng, 50);
  Camera cam = simple_camera(48);
  const RenderOutput base = render(set, cam);

  const Eigen::Vector3d shift{12.3, -4.5, 6.7};
  PointSet moved = set;
  for (auto& p : moved.points) p.center += shift;
  Camera moved_cam = cam;
  moved_cam.position += shift;
  moved_cam.look_at += shift;
  const RenderOutput out = render(moved, moved_cam);
  CHECK(max_abs_diff(base.color, out.color) < 1e-6);
  CHECK(max_abs_diff(base.opacity_map, out.opacity_map) < 1e-6);
  CHECK(max_abs_diff(base.depth, out.depth) < 1e-6);
}

TEST_CASE("render: worker count does not change the result") {
  Rng rng(404);
  const PointSet set = random_scene(rng, 80);
  const Camera cam = simple_camera(64);
  set_thread_count(1);
  const RenderOutput serial = render(set, cam);
  set_thread_count(4);
  const RenderOutput parallel = render(set, cam);
  set_thread_count(0);
  CHECK(max_abs_diff(serial.color, parallel.color) == 0.0);
  CHECK(max_abs_diff(serial.depth, parallel.depth) == 0.0);
}

TEST_CASE("render_layer_pair: single layer is locally and globally equal") {
  Rng rng(99);
  LayeredAvatar avatar;
  GaussianLayer layer;
  layer.layer_index = 1;
  for (int i = 0; i < 30; ++i) layer.points.push_back(random_point(rng));
  avatar.layers.push_back(layer);
  const auto pair = render_layer_pair(avatar, 1, simple_camera(48));
  CHECK(max_abs_diff(pair.local.color, pair.global.color) == 0.0);
  CHECK(max_abs_diff(pair.local.depth, pair.global.depth) == 0.0);
}

TEST_CASE("render_layer_pair: occluded body leaves garment pixels intact") {
  // Body: small red Gaussian behind. Garment: large opaque blue shell in
  // front. On garment-mask pixels the global image equals the local one.
  LayeredAvatar avatar;
  GaussianLayer body;
  body.layer_index = 1;
  body.points.push_back(GaussianPoint::from_activated(
      {0, 0, -0.5}, {0.2, 0.2, 0.2}, {1, 0, 0, 0}, {1.0, 0.0, 0.0}, 0.9));
  GaussianLayer garment;
  garment.layer_index = 2;
  garment.points.push_back(GaussianPoint::from_activated(
      {0, 0, 0.5}, {0.6, 0.6, 0.6}, {1, 0, 0, 0}, {0.0, 0.0, 1.0}, 1.0));
  avatar.layers = {body, garment};

  const auto pair = render_layer_pair(avatar, 2, centered_camera());
  double max_diff = 0.0;
  for (int y = 0; y < pair.local.color.height(); ++y) {
    for (int x = 0; x < pair.local.color.width(); ++x) {
      if (pair.local.alpha_mask.at(y, x) == 0.0) continue;
      if (pair.local.opacity_map.at(y, x) < 1.0 - 1e-9) continue;
      for (int c = 0; c < 3; ++c) {
        max_diff = std::max(max_diff,
                            std::fabs(pair.global.color.at(y, x, c) -
                                      pair.local.color.at(y, x, c)));
      }
    }
  }
  CHECK(max_diff < 1e-4);
}

TEST_CASE("render_layer_pair: empty garment layer") {
  Rng rng(12);
  LayeredAvatar avatar;
  GaussianLayer body;
  body.layer_index = 1;
  for (int i = 0; i < 25; ++i) body.points.push_back(random_point(rng));
  GaussianLayer garment;
  garment.layer_index = 2;
  avatar.layers = {body, garment};

  const Camera cam = simple_camera(48);
  const auto pair = render_layer_pair(avatar, 2, cam);
  for (const double v : pair.local.color.raw()) CHECK(v == 0.0);
  const RenderOutput body_only = render(avatar.compose_prefix(1), cam);
  CHECK(max_abs_diff(pair.global.color, body_only.color) == 0.0);

  CHECK_THROWS_AS(render_layer_pair(avatar, 3, cam), std::out_of_range);
}
