#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "rnav/episode.hpp"
#include "rnav/episode_json.hpp"
#include "rnav/logging.hpp"
#include "rnav/scenario_json.hpp"

namespace rnav::apps {

constexpr int kExitSuccess = 0;
constexpr int kExitDomainFailure = 1;
constexpr int kExitUsage = 2;

/// run: execute one episode, write log.jsonl, metrics.json, plot CSVs and the
/// effective (post-override) configuration. Exit 0 iff the success metric
/// holds; schema problems exit 2 without partial outputs.
inline int cmd_run(const std::filesystem::path& scenario_path,
                   std::optional<std::uint64_t> seed,
                   const std::filesystem::path& out_dir,
                   const std::vector<std::string>& overrides) {
  Scenario scenario;
  nlohmann::ordered_json effective;
  try {
    effective = load_scenario_document(scenario_path);
    for (const auto& ov : overrides) apply_override(effective, ov);
    if (seed) effective["seed"] = *seed;
    scenario = scenario_from_json(effective);
  } catch (const ScenarioError& e) {
    logging::error(e.what());
    return kExitUsage;
  }

  logging::info("running scenario '" + scenario.name + "' seed " +
                std::to_string(scenario.seed));
  const EpisodeLog log = run_episode(scenario);
  const EpisodeMetrics m = metrics(log, scenario);

  std::filesystem::create_directories(out_dir);
  write_episode_jsonl(out_dir / "log.jsonl", log);
  {
    std::ofstream out(out_dir / "metrics.json");
    out << metrics_to_json(m, log).dump(2) << "\n";
  }
  write_min_h_csv(out_dir / "minh.csv", log);
  write_path_csv(out_dir / "path.csv", log);
  {
    std::ofstream out(out_dir / "effective_config.json");
    out << effective.dump(2) << "\n";
  }

  if (m.fallback_count > 0) {
    logging::warn("solver fell back on " + std::to_string(m.fallback_count) +
                  " ticks");
  }
  logging::info("success=" + std::to_string(m.success) +
                " min_h=" + std::to_string(m.min_h));
  return m.success ? kExitSuccess : kExitDomainFailure;
}

/// A repeatable mid-flight OCP: forward flight at 2 m/s with K world points
/// scattered ahead of the path on a deterministic spiral.
inline OcpProblem bench_snapshot(int k_points, const VehicleParams& params) {
  VehicleState x0 = VehicleState::hover_at({0, 0, 1.5});
  x0.v = Vec3(2.0, 0, 0);

  ReferenceTrajectory ref;
  const int n = 10;
  const double dt = 0.1;
  for (int j = 0; j <= n; ++j) {
    VehicleState xr = VehicleState::hover_at({2.0 * dt * j, 0, 1.5});
    xr.v = Vec3(2.0, 0, 0);
    ref.states.push_back(xr);
    if (j < n) ref.inputs.push_back(ControlInput::hover(params));
  }

  ConstraintSet set;
  set.r_safe = 0.45;
  set.lambda = 2.0;
  const double golden = 2.39996322972865332;
  for (int k = 0; k < k_points; ++k) {
    const double angle = golden * k;
    const double radial = 0.6 + 0.9 * (k % 7) / 6.0;
    set.points.push_back(Vec3(2.0 + 2.0 * k / std::max(1, k_points - 1),
                              radial * std::cos(angle),
                              1.5 + 0.8 * std::sin(angle)));
  }

  return build_ocp(x0, ref, OcpWeights::defaults(), OcpBounds::defaults(params),
                   set, n, dt, params);
}

struct BenchRow {
  int k = 0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
};

/// bench-cbf: solve the fixed snapshot `repeats` times per K and report wall
/// times. Repeats run sequentially from the same warm start for timing
/// fidelity.
inline std::vector<BenchRow> bench_cbf(const std::vector<int>& k_list, int repeats) {
  VehicleParams params;
  std::vector<BenchRow> rows;
  for (const int k : k_list) {
    const OcpProblem ocp = bench_snapshot(k, params);
    const SolveResult warm = solve_sqp(ocp);  // untimed warm-up
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
      const SolveResult res = solve_sqp(ocp, &warm);
      times.push_back(res.solve_time_s * 1e3);
    }
    std::sort(times.begin(), times.end());
    BenchRow row;
    row.k = k;
    row.median_ms = times[times.size() / 2];
    row.p95_ms = times[static_cast<std::size_t>(
        std::min<double>(static_cast<double>(times.size()) - 1.0,
                         std::ceil(0.95 * static_cast<double>(times.size())) - 1.0))];
    double sum = 0.0;
    for (const double t : times) sum += t;
    row.mean_ms = sum / static_cast<double>(times.size());
    rows.push_back(row);
  }
  return rows;
}

inline int cmd_bench_cbf(const std::vector<int>& k_list, int repeats,
                         const std::filesystem::path& out_dir) {
  if (k_list.empty() || repeats < 1) {
    logging::error("bench-cbf: need a non-empty k-list and repeats >= 1");
    return kExitUsage;
  }
  const auto rows = bench_cbf(k_list, repeats);
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "bench_cbf.csv");
  out << "k,median_ms,p95_ms,mean_ms\n";
  char buf[160];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", row.k, row.median_ms,
                  row.p95_ms, row.mean_ms);
    out << buf;
  }
  return kExitSuccess;
}

/// Seeded synthetic depth scene: a smooth ramp with gaussian bumps.
inline DepthRaster depth_fixture(std::uint64_t seed, int width = 160,
                                 int height = 120) {
  DepthRaster truth(width, height);
  auto rng = make_rng(seed, 0x5ce11eULL);
  std::uniform_real_distribution<double> ucx(0.0, width);
  std::uniform_real_distribution<double> ucy(0.0, height);
  std::uniform_real_distribution<double> urad(8.0, 40.0);
  std::uniform_real_distribution<double> uamp(-2.0, 2.0);
  struct Bump {
    double cx, cy, radius, amp;
  };
  std::vector<Bump> bumps;
  for (int b = 0; b < 6; ++b) {
    bumps.push_back({ucx(rng), ucy(rng), urad(rng), uamp(rng)});
  }
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      double d = 0.6 + 7.0 * static_cast<double>(i) / width +
                 1.5 * static_cast<double>(j) / height;
      for (const auto& bump : bumps) {
        const double dx = i - bump.cx;
        const double dy = j - bump.cy;
        d += bump.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * bump.radius * bump.radius));
      }
      truth.at(i, j) = static_cast<float>(std::max(d, 0.3));
    }
  }
  return truth;
}

inline SyntheticDistortion distortion_preset(const std::string& name) {
  SyntheticDistortion d;
  if (name == "identity") {
    d.kind = SyntheticDistortion::Kind::identity;
  } else if (name == "affine") {
    d.kind = SyntheticDistortion::Kind::affine;
  } else if (name == "quadratic") {
    d.kind = SyntheticDistortion::Kind::quadratic_inverse;
  } else if (name == "logistic") {
    d.kind = SyntheticDistortion::Kind::logistic;
    d.noise_sigma = 0.002;
  } else {
    throw ScenarioError("unknown distortion '" + name + "'");
  }
  return d;
}

struct DepthFitTrial {
  int trial = 0;
  int order = 0;
  double rmse = 0.0;
  double abs_rel = 0.0;
};

inline std::vector<DepthFitTrial> depth_fit_trials(const std::string& distortion,
                                                   const std::vector<int>& orders,
                                                   int trials, std::uint64_t seed) {
  const SyntheticDistortion dist = distortion_preset(distortion);
  std::vector<DepthFitTrial> rows;
  for (int t = 0; t < trials; ++t) {
    const DepthRaster truth = depth_fixture(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const RelativeDepthFrame rel = synthetic_relative_depth(
        truth, dist, derive_seed(seed, 1000 + static_cast<std::uint64_t>(t)));
    DepthFrame sensed;
    sensed.values = truth;
    sensed.mask = valid_mask(truth, 0.0, 1e9);
    const MaskRaster all = sensed.mask;
    for (const int order : orders) {
      const auto poly = fit_alignment(sensed, rel, order);
      DepthFitTrial row;
      row.trial = t;
      row.order = order;
      if (poly) {
        const auto completed = complete(rel, *poly, {0.05, 100.0});
        if (const auto m = depth_metrics(completed.values, truth, all)) {
          row.rmse = m->rmse;
          row.abs_rel = m->abs_rel;
        }
      } else {
        row.rmse = std::numeric_limits<double>::quiet_NaN();
        row.abs_rel = std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

inline int cmd_depth_fit(const std::string& distortion, const std::vector<int>& orders,
                         int trials, std::uint64_t seed,
                         const std::filesystem::path& out_dir) {
  for (const int order : orders) {
    if (order < 1 || order > 3) {
      logging::error("depth-fit: orders must be within {1,2,3}");
      return kExitUsage;
    }
  }
  if (orders.empty() || trials < 1) {
    logging::error("depth-fit: need at least one order and one trial");
    return kExitUsage;
  }
  std::vector<DepthFitTrial> rows;
  try {
    rows = depth_fit_trials(distortion, orders, trials, seed);
  } catch (const ScenarioError& e) {
    logging::error(e.what());
    return kExitUsage;
  }

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "depth_fit_trials.csv");
    out << "trial,order,rmse_m,absrel\n";
    char buf[120];
    for (const auto& row : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g\n", row.trial, row.order,
                    row.rmse, row.abs_rel);
      out << buf;
    }
  }
  {
    std::ofstream out(out_dir / "depth_fit.csv");
    out << "order,rmse_mean_m,rmse_std_m,absrel_mean,absrel_std,trials\n";
    char buf[160];
    for (const int order : orders) {
      double rm = 0.0, am = 0.0;
      int count = 0;
      for (const auto& row : rows) {
        if (row.order == order && std::isfinite(row.rmse)) {
          rm += row.rmse;
          am += row.abs_rel;
          ++count;
        }
      }
      rm /= std::max(count, 1);
      am /= std::max(count, 1);
      double rv = 0.0, av = 0.0;
      for (const auto& row : rows) {
        if (row.order == order && std::isfinite(row.rmse)) {
          rv += (row.rmse - rm) * (row.rmse - rm);
          av += (row.abs_rel - am) * (row.abs_rel - am);
        }
      }
      const double denom = std::max(count - 1, 1);
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%d\n", order, rm,
                    std::sqrt(rv / denom), am, std::sqrt(av / denom), count);
      out << buf;
    }
  }
  return kExitSuccess;
}

/// validate: schema check only.
inline int cmd_validate(const std::filesystem::path& scenario_path) {
  try {
    const auto doc = load_scenario_document(scenario_path);
    (void)scenario_from_json(doc);
  } catch (const ScenarioError& e) {
    logging::error(e.what());
    return kExitUsage;
  }
  std::printf("ok: %s\n", scenario_path.string().c_str());
  return kExitSuccess;
}

}  // namespace rnav::apps
