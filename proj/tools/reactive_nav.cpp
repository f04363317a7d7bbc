#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rnav/apps.hpp"

namespace {

std::vector<int> parse_int_csv(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"closed-loop reactive collision avoidance simulation"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string k_list_csv = "1,10,50,100";
  int repeats = 20;
  std::string orders_csv = "1,2,3";
  std::string distortion = "logistic";
  int trials = 20;
  std::uint64_t tool_seed = 0;

  auto* run = app.add_subcommand("run", "run a scenario episode");
  run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--override", overrides, "dotted-key override, KEY=VALUE");

  auto* bench = app.add_subcommand("bench-cbf", "solve-time vs constraint count");
  bench->add_option("--k-list", k_list_csv, "comma-separated constraint counts");
  bench->add_option("--repeats", repeats, "timed solves per K");
  bench->add_option("--out", out_dir, "output directory");

  auto* fit = app.add_subcommand("depth-fit", "polynomial-order analysis");
  fit->add_option("--distortion", distortion,
                  "identity | affine | quadratic | logistic");
  fit->add_option("--orders", orders_csv, "comma-separated polynomial orders");
  fit->add_option("--trials", trials, "seeded trials");
  fit->add_option("--seed", tool_seed, "base seed");
  fit->add_option("--out", out_dir, "output directory");

  auto* validate = app.add_subcommand("validate", "schema-check a scenario file");
  validate->add_option("--scenario", scenario_path, "scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return rnav::apps::kExitUsage;
  }

  try {
    if (run->parsed()) {
      return rnav::apps::cmd_run(scenario_path, seed, out_dir, overrides);
    }
    if (bench->parsed()) {
      return rnav::apps::cmd_bench_cbf(parse_int_csv(k_list_csv), repeats, out_dir);
    }
    if (fit->parsed()) {
      return rnav::apps::cmd_depth_fit(distortion, parse_int_csv(orders_csv), trials,
                                       tool_seed, out_dir);
    }
    if (validate->parsed()) {
      return rnav::apps::cmd_validate(scenario_path);
    }
  } catch (const std::exception& e) {
    rnav::logging::error(e.what());
    return rnav::apps::kExitDomainFailure;
  }
  return rnav::apps::kExitUsage;
}
