#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "rnav/risk.hpp"

using namespace rnav;

namespace {

CameraIntrinsics small_intr() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 100.0;
  intr.cx = 32.0;
  intr.cy = 24.0;
  intr.width = 64;
  intr.height = 48;
  return intr;
}

CompletedDepth constant_depth(int w, int h, float z) {
  CompletedDepth d;
  d.values = DepthRaster(w, h, z);
  return d;
}

TtcMap map_from_raster(Raster<float> values) {
  TtcMap m;
  m.values = std::move(values);
  return m;
}

/// Brute-force per-cell scan used as the pooling oracle.
std::vector<Eigen::Vector2i> min_pool_oracle(const TtcMap& ttc, int pool) {
  std::vector<Eigen::Vector2i> out;
  const int w = ttc.values.width(), h = ttc.values.height();
  for (int v0 = 0; v0 < h; v0 += pool) {
    for (int u0 = 0; u0 < w; u0 += pool) {
      float best = kInfTtc;
      Eigen::Vector2i arg(-1, -1);
      for (int j = v0; j < std::min(v0 + pool, h); ++j) {
        for (int i = u0; i < std::min(u0 + pool, w); ++i) {
          if (ttc.values.at(i, j) < best) {
            best = ttc.values.at(i, j);
            arg = {i, j};
          }
        }
      }
      if (arg.x() >= 0) out.push_back(arg);
    }
  }
  return out;
}

bool same_coords(std::vector<Eigen::Vector2i> a, std::vector<Eigen::Vector2i> b) {
  auto key = [](const Eigen::Vector2i& c) { return c.y() * 100000 + c.x(); };
  auto cmp = [&](const Eigen::Vector2i& x, const Eigen::Vector2i& y) {
    return key(x) < key(y);
  };
  std::sort(a.begin(), a.end(), cmp);
  std::sort(b.begin(), b.end(), cmp);
  if (a.size() != b.size()) return false;
  for (std::size_t n = 0; n < a.size(); ++n) {
    if (a[n] != b[n]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("on-axis TTC substitution") {
  const auto intr = small_intr();
  const auto rays = ray_directions(intr);
  const auto depth = constant_depth(intr.width, intr.height, 3.0f);
  const auto ttc = ttc_map(depth, {0, 0, 1.5}, rays, 0.05);
  CHECK(ttc.values.at(32, 24) == Catch::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("receding velocity yields an all-infinite map") {
  const auto intr = small_intr();
  const auto rays = ray_directions(intr);
  const auto depth = constant_depth(intr.width, intr.height, 3.0f);
  const auto ttc = ttc_map(depth, {0, 0, -1.0}, rays, 0.05);
  CHECK(std::all_of(ttc.values.begin(), ttc.values.end(),
                    [](float v) { return std::isinf(v); }));
  CHECK(min_ttc(ttc) == kInfTtc);
}

TEST_CASE("ttc matches a scalar loop oracle") {
  const auto intr = small_intr();
  const auto rays = ray_directions(intr);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.5);
  std::uniform_real_distribution<float> uz(0.3f, 10.0f);
  CompletedDepth depth;
  depth.values = DepthRaster(intr.width, intr.height);
  for (auto& v : depth.values) v = uz(rng);
  const Eigen::Vector3d vel(n(rng), n(rng), n(rng));
  const double eps_v = 0.05;
  const auto ttc = ttc_map(depth, vel, rays, eps_v);
  for (int j = 0; j < intr.height; ++j) {
    for (int i = 0; i < intr.width; ++i) {
      const double s = vel.dot(rays.at(i, j));
      const float expected =
          s >= eps_v ? static_cast<float>(depth.values.at(i, j) / s) : kInfTtc;
      CHECK(ttc.values.at(i, j) == expected);
    }
  }
}

TEST_CASE("min-pool on a 4x4 raster of distinct values") {
  Raster<float> vals(4, 4);
  float v = 16.0f;
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) vals.at(i, j) = v--;
  }
  const auto m = map_from_raster(std::move(vals));
  const auto coords = min_pool(m, 2);
  REQUIRE(coords.size() == 4u);
  CHECK(same_coords(coords, min_pool_oracle(m, 2)));
}

TEST_CASE("min-pool tie-break picks the cell's top-left pixel") {
  const auto m = map_from_raster(Raster<float>(4, 4, 1.0f));
  const auto coords = min_pool(m, 2);
  REQUIRE(coords.size() == 4u);
  CHECK(coords[0] == Eigen::Vector2i(0, 0));
  CHECK(coords[1] == Eigen::Vector2i(2, 0));
  CHECK(coords[2] == Eigen::Vector2i(0, 2));
  CHECK(coords[3] == Eigen::Vector2i(2, 2));
}

TEST_CASE("pool size covering the raster returns the global argmin") {
  Raster<float> vals(6, 5, 9.0f);
  vals.at(4, 3) = 0.5f;
  const auto m = map_from_raster(std::move(vals));
  const auto coords = min_pool(m, 16);
  REQUIRE(coords.size() == 1u);
  CHECK(coords[0] == Eigen::Vector2i(4, 3));
}

TEST_CASE("all-infinite cells yield no coordinate") {
  Raster<float> vals(4, 2, kInfTtc);
  vals.at(0, 0) = 1.0f;
  const auto m = map_from_raster(std::move(vals));
  const auto coords = min_pool(m, 2);
  REQUIRE(coords.size() == 1u);
  CHECK(coords[0] == Eigen::Vector2i(0, 0));
}

TEST_CASE("min-pool matches the brute-force oracle on random rasters") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> uv(0.1f, 50.0f);
  std::bernoulli_distribution drop(0.2);
  for (int trial = 0; trial < 100; ++trial) {
    Raster<float> vals(64, 48);
    for (auto& v : vals) v = drop(rng) ? kInfTtc : uv(rng);
    const auto m = map_from_raster(std::move(vals));
    for (int pool : {1, 3, 17}) {
      const auto got = min_pool(m, pool);
      const auto expect = min_pool_oracle(m, pool);
      REQUIRE(got.size() == expect.size());
      for (std::size_t n = 0; n < got.size(); ++n) CHECK(got[n] == expect[n]);
      const int cells = ((64 + pool - 1) / pool) * ((48 + pool - 1) / pool);
      CHECK(static_cast<int>(got.size()) <= cells);
    }
  }
}

TEST_CASE("footprint filter keeps the principal point") {
  const auto intr = small_intr();
  const auto depth = constant_depth(intr.width, intr.height, 25.0f);
  RobotFootprint fp{0.3, 0.3, 0.1};
  const auto out = footprint_filter({Eigen::Vector2i(32, 24)}, depth, intr, fp);
  REQUIRE(out.size() == 1u);
}

TEST_CASE("footprint filter arithmetic") {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 100.0;
  intr.cx = intr.cy = 120.0;
  intr.width = intr.height = 240;
  const auto depth = constant_depth(intr.width, intr.height, 2.0f);
  RobotFootprint fp{0.5, 0.5, 0.1};
  // half extent = 0.5 * 100 / (2 * 2) = 12.5 px
  const auto out = footprint_filter(
      {Eigen::Vector2i(130, 120), Eigen::Vector2i(140, 120)}, depth, intr, fp);
  REQUIRE(out.size() == 1u);
  CHECK(out[0] == Eigen::Vector2i(130, 120));
}

TEST_CASE("footprint filter matches the direct inequality oracle") {
  const auto intr = small_intr();
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> ui(0, intr.width - 1);
  std::uniform_int_distribution<int> uj(0, intr.height - 1);
  std::uniform_real_distribution<float> uz(0.2f, 8.0f);
  CompletedDepth depth;
  depth.values = DepthRaster(intr.width, intr.height);
  for (auto& v : depth.values) v = uz(rng);
  RobotFootprint fp{0.4, 0.3, 0.1};
  const double z_min = 0.1;

  std::vector<Eigen::Vector2i> coords;
  for (int n = 0; n < 300; ++n) coords.push_back({ui(rng), uj(rng)});
  const auto got = footprint_filter(coords, depth, intr, fp, z_min);

  std::vector<Eigen::Vector2i> expect;
  for (const auto& c : coords) {
    const double z = std::max<double>(depth.values.at(c.x(), c.y()), z_min);
    if (std::abs(c.x() - intr.cx) <= fp.d_x * intr.fx / (2.0 * z) &&
        std::abs(c.y() - intr.cy) <= fp.d_y * intr.fy / (2.0 * z)) {
      expect.push_back(c);
    }
  }
  REQUIRE(got.size() == expect.size());
  for (std::size_t n = 0; n < got.size(); ++n) CHECK(got[n] == expect[n]);
}

TEST_CASE("footprint retained set shrinks weakly as depth increases") {
  const auto intr = small_intr();
  RobotFootprint fp{0.4, 0.4, 0.1};
  std::vector<Eigen::Vector2i> coords;
  for (int i = 0; i < intr.width; i += 4) coords.push_back({i, 24});
  std::size_t prev = coords.size() + 1;
  for (float z : {0.5f, 1.0f, 2.0f, 4.0f, 8.0f}) {
    const auto depth = constant_depth(intr.width, intr.height, z);
    const auto kept = footprint_filter(coords, depth, intr, fp);
    CHECK(kept.size() <= prev);
    prev = kept.size();
  }
}

TEST_CASE("top-k selects lowest TTC values in order") {
  Raster<float> vals(5, 1);
  vals.at(0, 0) = 3.0f;
  vals.at(1, 0) = 1.0f;
  vals.at(2, 0) = 4.0f;
  vals.at(3, 0) = 1.5f;
  vals.at(4, 0) = 9.0f;
  const auto m = map_from_raster(std::move(vals));
  std::vector<Eigen::Vector2i> coords;
  for (int i = 0; i < 5; ++i) coords.push_back({i, 0});

  const auto two = top_k(coords, m, 2);
  REQUIRE(two.size() == 2u);
  CHECK(two[0] == Eigen::Vector2i(1, 0));
  CHECK(two[1] == Eigen::Vector2i(3, 0));

  const auto all = top_k(coords, m, 99);
  CHECK(all.size() == 5u);
}

TEST_CASE("top-k matches a full-sort oracle") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<float> uv(0.1f, 20.0f);
  for (int trial = 0; trial < 50; ++trial) {
    Raster<float> vals(32, 16);
    for (auto& v : vals) v = uv(rng);
    const auto m = map_from_raster(std::move(vals));
    std::vector<Eigen::Vector2i> coords;
    std::uniform_int_distribution<int> ui(0, 31), uj(0, 15);
    std::set<std::pair<int, int>> seen;
    while (coords.size() < 20u) {
      const int i = ui(rng), j = uj(rng);
      if (seen.insert({i, j}).second) coords.push_back({i, j});
    }
    for (int k = 1; k <= static_cast<int>(coords.size()); ++k) {
      const auto got = top_k(coords, m, k);
      auto sorted = coords;
      std::sort(sorted.begin(), sorted.end(),
                [&m](const Eigen::Vector2i& a, const Eigen::Vector2i& b) {
                  const float ta = m.values.at(a.x(), a.y());
                  const float tb = m.values.at(b.x(), b.y());
                  if (ta != tb) return ta < tb;
                  if (a.y() != b.y()) return a.y() < b.y();
                  return a.x() < b.x();
                });
      sorted.resize(static_cast<std::size_t>(k));
      REQUIRE(got.size() == sorted.size());
      for (std::size_t n = 0; n < got.size(); ++n) CHECK(got[n] == sorted[n]);
      // every selected TTC <= every rejected TTC
      if (!got.empty() && k < static_cast<int>(coords.size())) {
        float max_sel = 0.0f;
        for (const auto& c : got) max_sel = std::max(max_sel, m.values.at(c.x(), c.y()));
        for (const auto& c : coords) {
          if (std::find(got.begin(), got.end(), c) == got.end()) {
            CHECK(max_sel <= m.values.at(c.x(), c.y()));
          }
        }
      }
    }
  }
}

TEST_CASE("hovering vehicle selects no risk points") {
  const auto intr = small_intr();
  const auto rays = ray_directions(intr);
  const auto depth = constant_depth(intr.width, intr.height, 2.0f);
  const auto sel = select_risk_points(depth, Eigen::Vector3d::Zero(), rays, intr,
                                      RigidTransform::identity(),
                                      RigidTransform::identity(), {}, {});
  CHECK(sel.points.empty());
}

TEST_CASE("wall straight ahead yields points on the wall plane") {
  const auto intr = small_intr();
  const auto rays = ray_directions(intr);
  const auto depth = constant_depth(intr.width, intr.height, 3.0f);
  RiskSelectorParams params;
  params.pool = 8;
  params.top = 10;
  const auto sel = select_risk_points(depth, {0, 0, 2.0}, rays, intr,
                                      RigidTransform::identity(),
                                      RigidTransform::identity(), {}, params);
  REQUIRE(!sel.points.empty());
  CHECK(sel.points.size() <= 10u);
  for (const auto& pt : sel.points) {
    CHECK(pt.depth == Catch::Approx(3.0).margin(1e-5));
    CHECK(pt.p_world.z() == Catch::Approx(3.0).margin(0.05));
  }
}

TEST_CASE("composed selector equals stage-by-stage composition") {
  const auto intr = small_intr();
  const auto rays = ray_directions(intr);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> uz(0.3f, 6.0f);
  CompletedDepth depth;
  depth.values = DepthRaster(intr.width, intr.height);
  for (auto& v : depth.values) v = uz(rng);

  RigidTransform cam_to_body;
  cam_to_body.rotation << 0, 0, 1, -1, 0, 0, 0, -1, 0;  // forward camera
  cam_to_body.translation = Eigen::Vector3d(0.1, 0, 0);
  RigidTransform body_to_world;
  body_to_world.rotation =
      Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  body_to_world.translation = Eigen::Vector3d(1, -2, 1.5);

  const Eigen::Vector3d v_world(1.2, 0.5, -0.1);
  RobotFootprint fp{0.4, 0.4, 0.1};
  RiskSelectorParams params;
  params.pool = 5;
  params.top = 6;

  const auto sel = select_risk_points(depth, v_world, rays, intr, cam_to_body,
                                      body_to_world, fp, params);

  const Eigen::Matrix3d r_wc = body_to_world.rotation * cam_to_body.rotation;
  const Eigen::Vector3d v_cam = r_wc.transpose() * v_world;
  const auto ttc = ttc_map(depth, v_cam, rays, params.eps_v);
  const auto staged = top_k(
      footprint_filter(min_pool(ttc, params.pool), depth, intr, fp, params.z_min),
      ttc, params.top);

  REQUIRE(sel.points.size() == staged.size());
  for (std::size_t n = 0; n < staged.size(); ++n) {
    CHECK(sel.points[n].pixel == staged[n]);
    const auto& pt = sel.points[n];
    const Eigen::Vector3d expected = cam_to_world(
        backproject(pt.pixel.x(), pt.pixel.y(), pt.depth, intr), cam_to_body,
        body_to_world);
    CHECK((pt.p_world - expected).norm() < 1e-12);
  }
}

TEST_CASE("risk points reproject onto their source pixels") {
  const auto intr = small_intr();
  const auto rays = ray_directions(intr);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<float> uz(0.3f, 6.0f);
  CompletedDepth depth;
  depth.values = DepthRaster(intr.width, intr.height);
  for (auto& v : depth.values) v = uz(rng);

  RigidTransform cam_to_body;
  cam_to_body.rotation << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  cam_to_body.translation = Eigen::Vector3d(0.08, 0.0, -0.02);
  RigidTransform body_to_world;
  body_to_world.rotation =
      (Eigen::AngleAxisd(-0.2, Eigen::Vector3d::UnitZ()) *
       Eigen::AngleAxisd(0.1, Eigen::Vector3d::UnitY()))
          .toRotationMatrix();
  body_to_world.translation = Eigen::Vector3d(4, 2, 1.2);

  RiskSelectorParams params;
  params.pool = 4;
  params.top = 8;
  const auto sel =
      select_risk_points(depth, body_to_world.rotation * Eigen::Vector3d(1.5, 0, 0),
                         rays, intr, cam_to_body, body_to_world, {}, params);
  REQUIRE(!sel.points.empty());
  const RigidTransform world_to_cam =
      body_to_world.compose(cam_to_body).inverse();
  for (const auto& pt : sel.points) {
    const Eigen::Vector3d back = world_to_cam.apply(pt.p_world);
    const Eigen::Vector2d pix = project(back, intr);
    CHECK(std::abs(pix.x() - pt.pixel.x()) < 0.5);
    CHECK(std::abs(pix.y() - pt.pixel.y()) < 0.5);
  }
}

TEST_CASE("scaling velocity scales finite TTCs and keeps the selection") {
  const auto intr = small_intr();
  const auto rays = ray_directions(intr);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<float> uz(0.3f, 6.0f);
  CompletedDepth depth;
  depth.values = DepthRaster(intr.width, intr.height);
  for (auto& v : depth.values) v = uz(rng);

  // forward-dominant velocity keeps every pixel's closing speed above the
  // floor, so scaling cannot flip the eps_v gate
  const Eigen::Vector3d v(0.1, -0.05, 2.0);
  const double c = 3.0;
  const auto base = ttc_map(depth, v, rays, 0.05);
  const auto scaled = ttc_map(depth, c * v, rays, 0.05);
  for (std::size_t n = 0; n < base.values.size(); ++n) {
    REQUIRE(std::isfinite(base.values.data()[n]));
    CHECK(scaled.values.data()[n] ==
          Catch::Approx(base.values.data()[n] / c).epsilon(1e-5));
  }
  const auto sel_base = top_k(min_pool(base, 6), base, 5);
  const auto sel_scaled = top_k(min_pool(scaled, 6), scaled, 5);
  REQUIRE(sel_base.size() == sel_scaled.size());
  for (std::size_t n = 0; n < sel_base.size(); ++n) {
    CHECK(sel_base[n] == sel_scaled[n]);
  }
}

TEST_CASE("min_ttc basics") {
  Raster<float> vals(3, 1);
  vals.at(0, 0) = 2.0f;
  vals.at(1, 0) = 0.5f;
  vals.at(2, 0) = 7.0f;
  CHECK(min_ttc(map_from_raster(std::move(vals))) == Catch::Approx(0.5));

  CHECK(min_ttc(map_from_raster(Raster<float>(4, 4, kInfTtc))) == kInfTtc);
}

TEST_CASE("min_ttc equals the post-pooling minimum") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<float> uv(0.1f, 30.0f);
  Raster<float> vals(40, 30);
  for (auto& v : vals) v = uv(rng);
  const auto m = map_from_raster(std::move(vals));
  const auto pooled = min_pool(m, 7);
  float pooled_min = kInfTtc;
  for (const auto& c : pooled) {
    pooled_min = std::min(pooled_min, m.values.at(c.x(), c.y()));
  }
  CHECK(min_ttc(m) == pooled_min);
}
