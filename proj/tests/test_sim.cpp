#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rnav/episode.hpp"
#include "rnav/scenario.hpp"
#include "rnav/sim.hpp"

using namespace rnav;

namespace {

CameraIntrinsics sim_intr() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 84.0;
  intr.cx = 80.0;
  intr.cy = 60.0;
  intr.width = 160;
  intr.height = 120;
  return intr;
}

Scenario hover_scenario() {
  Scenario s;
  s.name = "hover";
  s.world.ground_plane = true;
  s.start_position = Vec3(0, 0, 1.5);
  s.goal_waypoints = {{Vec3(0, 0, 1.5), 0.0}};
  s.trajectory_duration = 1.0;
  s.duration = 4.0;
  return s;
}

Scenario pole_scenario() {
  Scenario s;
  s.name = "single-pole";
  s.world.obstacles.push_back(
      ObstaclePrimitive::cylinder({3.0, 0.25, 1.5}, 0.4, 3.0));
  s.start_position = Vec3(0, 0, 1.2);
  s.goal_waypoints = {{Vec3(6, 0, 1.2), 0.0}};
  s.trajectory_duration = 7.0;
  s.duration = 10.0;
  s.sensor.noise_sigma = 0.01;
  s.sensor.dropout_rate = 0.1;
  s.perception.distortion.kind = SyntheticDistortion::Kind::quadratic_inverse;
  s.perception.distortion.noise_sigma = 0.003;
  s.controller.position_min.z() = 0.7;
  s.controller.position_max.z() = 2.2;
  s.controller.velocity_bound = Vec3(2.5, 2.5, 1.0);
  s.seed = 5;
  return s;
}

}  // namespace

TEST_CASE("empty world renders all infinite") {
  World world;
  world.ground_plane = false;
  const auto rays = ray_directions(sim_intr());
  const auto depth = render_depth(world, RigidTransform::identity(), rays);
  CHECK(std::all_of(depth.begin(), depth.end(),
                    [](float v) { return std::isinf(v); }));
}

TEST_CASE("unit sphere five meters ahead") {
  World world;
  world.ground_plane = false;
  world.obstacles.push_back(ObstaclePrimitive::sphere({0, 0, 5}, 1.0));
  const auto rays = ray_directions(sim_intr());
  const auto depth = render_depth(world, RigidTransform::identity(), rays);
  CHECK(depth.at(80, 60) == Catch::Approx(4.0).margin(1e-6));
}

TEST_CASE("center-pixel depths match closed forms per primitive") {
  const auto rays = ray_directions(sim_intr());
  // camera looks along world +z from the origin
  {
    World world;
    world.ground_plane = false;
    world.obstacles.push_back(ObstaclePrimitive::box({0, 0, 3}, {0.5, 0.5, 0.25}));
    const auto depth = render_depth(world, RigidTransform::identity(), rays);
    CHECK(depth.at(80, 60) == Catch::Approx(2.75).margin(1e-6));
  }
  {
    // cylinder seen side-on through the forward-camera mount
    World world;
    world.ground_plane = false;
    world.obstacles.push_back(ObstaclePrimitive::cylinder({4, 0, 0}, 0.3, 10.0));
    const auto depth =
        render_depth(world, Scenario::forward_camera(), rays);
    CHECK(depth.at(80, 60) == Catch::Approx(4.0 - 0.3 - 0.08).margin(1e-6));
  }
  {
    // straight down at the ground plane from 2 m
    World world;
    RigidTransform cam;
    cam.rotation << 1, 0, 0,
                    0, -1, 0,
                    0, 0, -1;  // camera z maps to world -z
    cam.translation = Eigen::Vector3d(0, 0, 2.0);
    const auto depth = render_depth(world, cam, rays);
    CHECK(depth.at(80, 60) == Catch::Approx(2.0).margin(1e-6));
  }
}

TEST_CASE("nearer primitive occludes the farther one") {
  World world;
  world.ground_plane = false;
  world.obstacles.push_back(ObstaclePrimitive::sphere({0, 0, 8}, 1.0));
  world.obstacles.push_back(ObstaclePrimitive::box({0, 0, 4}, {0.4, 0.4, 0.4}));
  const auto rays = ray_directions(sim_intr());
  const auto depth = render_depth(world, RigidTransform::identity(), rays);
  CHECK(depth.at(80, 60) == Catch::Approx(3.6).margin(1e-6));
  // past the box silhouette (tan > 0.4/3.6) the sphere shows through
  CHECK(depth.at(90, 60) > 4.4);
  CHECK(std::isfinite(depth.at(90, 60)));
}

TEST_CASE("signed distances are consistent with surfaces") {
  const auto sphere = ObstaclePrimitive::sphere({1, 2, 3}, 0.5);
  CHECK(sphere.signed_distance({1, 2, 3.5}) == Catch::Approx(0.0).margin(1e-12));
  CHECK(sphere.signed_distance({1, 2, 3}) == Catch::Approx(-0.5));

  const auto cyl = ObstaclePrimitive::cylinder({0, 0, 1}, 0.4, 2.0);
  CHECK(cyl.signed_distance({0.9, 0, 1.0}) == Catch::Approx(0.5).margin(1e-12));
  CHECK(cyl.signed_distance({0, 0, 2.5}) == Catch::Approx(0.5).margin(1e-12));

  const auto box = ObstaclePrimitive::box({0, 0, 0}, {1, 1, 1});
  CHECK(box.signed_distance({2, 0, 0}) == Catch::Approx(1.0).margin(1e-12));
  CHECK(box.signed_distance({0, 0, 0}) == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("trivial sensor model passes finite pixels through") {
  DepthRaster truth(32, 24, 2.0f);
  truth.at(5, 5) = kInfDepth;
  SensorModel sensor;
  sensor.range = std::numeric_limits<double>::infinity();
  sensor.dropout_rate = 0.0;
  sensor.noise_sigma = 0.0;
  sensor.edge_width = 0;
  const auto frame = corrupt(truth, sensor, 1);
  int valid = 0;
  for (int j = 0; j < 24; ++j) {
    for (int i = 0; i < 32; ++i) {
      if (mask_valid(frame.mask.at(i, j))) {
        ++valid;
        CHECK(frame.values.at(i, j) == truth.at(i, j));
      }
    }
  }
  CHECK(valid == 32 * 24 - 1);
  CHECK(!mask_valid(frame.mask.at(5, 5)));
}

TEST_CASE("wall beyond the range clip yields a fully invalid frame") {
  DepthRaster truth(16, 12, 5.0f);
  SensorModel sensor;  // range 3 m
  const auto frame = corrupt(truth, sensor, 2);
  CHECK(std::all_of(frame.mask.begin(), frame.mask.end(),
                    [](std::uint8_t m) { return !mask_valid(m); }));
}

TEST_CASE("dropout rates land near their configured values") {
  DepthRaster truth(100, 100, 2.0f);  // flat: no edge band
  SensorModel sensor;
  sensor.range = 10.0;
  sensor.noise_sigma = 0.0;
  sensor.edge_width = 0;

  sensor.dropout_rate = 0.3;
  const auto f30 = corrupt(truth, sensor, 3);
  double invalid = 0;
  for (const auto m : f30.mask) invalid += mask_valid(m) ? 0 : 1;
  CHECK(invalid / 1e4 == Catch::Approx(0.30).margin(0.02));

  sensor.dropout_rate = 0.2;
  const auto f20 = corrupt(truth, sensor, 4);
  double valid = 0;
  for (const auto m : f20.mask) valid += mask_valid(m) ? 1 : 0;
  CHECK(valid / 1e4 == Catch::Approx(0.80).margin(0.02));
}

TEST_CASE("edge band drops pixels near discontinuities") {
  DepthRaster truth(40, 20, 1.0f);
  for (int j = 0; j < 20; ++j) {
    for (int i = 20; i < 40; ++i) truth.at(i, j) = 2.5f;  // step at i=20
  }
  SensorModel sensor;
  sensor.range = 10.0;
  sensor.dropout_rate = 0.0;
  sensor.noise_sigma = 0.0;
  sensor.edge_width = 2;
  const auto frame = corrupt(truth, sensor, 5);
  for (int j = 0; j < 20; ++j) {
    for (int i = 18; i <= 21; ++i) CHECK(!mask_valid(frame.mask.at(i, j)));
  }
  CHECK(mask_valid(frame.mask.at(5, 10)));
  CHECK(mask_valid(frame.mask.at(35, 10)));
}

TEST_CASE("corruption is deterministic per seed") {
  DepthRaster truth(64, 48);
  for (int j = 0; j < 48; ++j) {
    for (int i = 0; i < 64; ++i) truth.at(i, j) = 1.0f + 0.01f * i;
  }
  SensorModel sensor;
  sensor.dropout_rate = 0.25;
  sensor.noise_sigma = 0.02;
  const auto a = corrupt(truth, sensor, 42);
  const auto b = corrupt(truth, sensor, 42);
  const auto c = corrupt(truth, sensor, 43);
  bool identical = true, differs = false;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    const float av = a.values.data()[n];
    const float bv = b.values.data()[n];
    identical = identical && ((av == bv) || (std::isnan(av) && std::isnan(bv))) &&
                a.mask.data()[n] == b.mask.data()[n];
    differs = differs || a.mask.data()[n] != c.mask.data()[n];
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("perfect sensing places risk points on obstacle surfaces") {
  World world;
  world.ground_plane = false;
  world.obstacles.push_back(ObstaclePrimitive::cylinder({4, 0.1, 1.2}, 0.4, 3.0));
  const auto intr = sim_intr();
  const auto rays = ray_directions(intr);

  VehicleState x = VehicleState::hover_at({0, 0, 1.2});
  x.v = Vec3(1.5, 0, 0);
  const RigidTransform body_to_world{x.q_att.toRotationMatrix(), x.p};
  const RigidTransform cam_to_body = Scenario::forward_camera();
  const auto true_depth =
      render_depth(world, body_to_world.compose(cam_to_body), rays);

  // identity provider + exact fit: completion equals the true depth
  const auto rel = synthetic_relative_depth(true_depth, {}, 0);
  DepthFrame sensed;
  sensed.values = true_depth;
  sensed.mask = valid_mask(true_depth, 0.1, 30.0);
  const auto poly = fit_alignment(sensed, rel, 2);
  REQUIRE(poly.has_value());
  const auto completed = complete(rel, *poly, {0.1, 30.0});

  RiskSelectorParams params;
  params.pool = 17;
  params.top = 10;
  const auto sel = select_risk_points(completed, x.v, rays, intr, cam_to_body,
                                      body_to_world, {}, params);
  REQUIRE(!sel.points.empty());
  for (const auto& pt : sel.points) {
    CHECK(std::abs(world.obstacles[0].signed_distance(pt.p_world)) < 1e-3);
  }
}

TEST_CASE("obstacle-free hover stays put and publishes no constraints") {
  const Scenario s = hover_scenario();
  const auto log = run_episode(s);
  REQUIRE(!log.ticks.empty());
  CHECK(!log.collided);
  for (const auto& rec : log.ticks) {
    CHECK(rec.n_risk_points == 0);
    CHECK((rec.p - s.start_position).norm() < 0.01);
  }
  const auto m = metrics(log, s);
  CHECK(m.success);
  CHECK(m.tracking_rmse < 0.01);
}

TEST_CASE("single pole is avoided and the goal reached") {
  const Scenario s = pole_scenario();
  const auto log = run_episode(s);
  const auto m = metrics(log, s);
  CHECK(!m.collision);
  CHECK(m.goal_reached);
  CHECK(m.min_h >= 0.0);
  CHECK(m.fallback_count == 0);
}

TEST_CASE("episodes are bit-reproducible per seed") {
  Scenario s = pole_scenario();
  s.duration = 2.0;
  const auto a = run_episode(s);
  const auto b = run_episode(s);
  REQUIRE(a.ticks.size() == b.ticks.size());
  for (std::size_t k = 0; k < a.ticks.size(); ++k) {
    CHECK((a.ticks[k].p.array() == b.ticks[k].p.array()).all());
    CHECK((a.ticks[k].u.array() == b.ticks[k].u.array()).all());
    CHECK(a.ticks[k].min_h == b.ticks[k].min_h);
    CHECK(a.ticks[k].nu == b.ticks[k].nu);
  }
}

TEST_CASE("disabled perception drives straight into the pole") {
  Scenario s = pole_scenario();
  s.world.obstacles[0].center.y() = 0.0;  // dead center on the path
  s.perception.enabled = false;
  const auto log = run_episode(s);
  const auto m = metrics(log, s);
  CHECK(m.collision);
  CHECK(!m.success);
}

TEST_CASE("metrics bookkeeping matches an injected series") {
  EpisodeLog log;
  log.control_dt = 0.005;
  for (int k = 0; k < 5; ++k) {
    TickRecord rec;
    rec.t = k * 0.005;
    rec.p = Vec3(k, 0, 1);
    rec.p_ref = rec.p;
    rec.min_h = 5.0 - k;  // minimum at the last tick: 1.0
    rec.v = Vec3(0.5 * k, 0, 0);
    log.ticks.push_back(rec);
  }
  log.solve_times_s.assign(5, 0.001);
  const auto m = metrics(log, Vec3(4, 0, 1), 0.3);
  CHECK(m.min_h == 1.0);
  CHECK(m.tracking_rmse == 0.0);
  CHECK(m.peak_speed == 2.0);
  CHECK(m.goal_reached);
  CHECK(m.success);
}
