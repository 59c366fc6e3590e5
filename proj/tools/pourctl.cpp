#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pour/cloud_io.hpp"
#include "pour/config.hpp"
#include "pour/harness.hpp"
#include "pour/sim.hpp"

using namespace pour;

namespace {

std::vector<LiquidSpec> presets_from(const std::string& path) {
  return path.empty() ? default_liquids() : load_liquids(path);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

void write_command_log(std::ostream& out, const TrialResult& r) {
  out << "timestamp,phase,wrist_angle_rad\n";
  char buf[96];
  for (const auto& t : r.log) {
    std::snprintf(buf, sizeof buf, "%.3f,%s,%.6f\n", t.command.timestamp,
                  to_string(t.command.phase), t.command.wrist_angle);
    out << buf;
  }
}

struct SimulateArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string csv, log, cloud, liquids;
};

int simulate(const SimulateArgs& a) {
  auto file = load_scenario(a.scenario, presets_from(a.liquids));
  if (a.seed) file.scenario.seed = *a.seed;
  file.sim.record = !a.log.empty();
  const Scenario& s = file.scenario;

  if (!a.cloud.empty()) {
    const WorldState w = make_world(s.liquid, s.cup, s.bottle, s.initial_volume_ml,
                                    s.prefill_mm * 1e-3, file.sim.controller.min_angle);
    write_cloud_file(a.cloud, DepthCamera(file.sim.sensor, s.cup).render(w, s.seed).cloud);
  }

  const TrialResult result = run_closed_loop(s, s.seed, file.sim);
  TrialRecord rec;
  rec.family = to_string(Family::Custom);
  rec.group = s.liquid.name;
  rec.scenario = s;
  fill_record(rec, result);

  std::printf("liquid %s, cup %s, bottle %s, %.0f ml in bottle, prefill %.1f mm, seed %llu\n",
              s.liquid.name.c_str(), s.cup.name.c_str(), s.bottle.name.c_str(),
              s.initial_volume_ml, s.prefill_mm, static_cast<unsigned long long>(s.seed));
  std::printf("target %.2f mm, achieved %.2f mm, error %+.2f mm (%+.1f ml), %.2f s\n",
              s.target_mm, rec.achieved_mm, rec.error_mm, rec.error_ml, rec.duration_s);

  if (!a.csv.empty()) {
    auto out = open_out(a.csv);
    write_csv(out, {rec});
  }
  if (!a.log.empty()) {
    auto out = open_out(a.log);
    write_command_log(out, result);
  }
  return 0;
}

struct ExperimentArgs {
  std::string plan;
  int trials = 0;
  std::optional<std::uint64_t> seed;
  std::string csv, liquids;
  bool quiet = false;
};

int experiment(const ExperimentArgs& a) {
  const auto presets = presets_from(a.liquids);
  PlanFile pf;
  if (const auto family = parse_family(a.plan); family && *family != Family::Custom) {
    PlanOptions opt;
    if (a.trials > 0) opt.trials_per_group = a.trials;
    if (a.seed) opt.seed = *a.seed;
    pf.plan = make_plan(*family, opt, presets);
  } else {
    if (!std::ifstream(a.plan)) {
      throw InvalidConfig("'" + a.plan +
                          "' is neither a family name (Liquids, InitialVolume, TargetHeight, "
                          "BottleOpening, Cups, PreFilled) nor a readable plan file");
    }
    Json j = load_json_file(a.plan);
    if (a.seed && !j.contains("trials")) j["seed"] = *a.seed;
    pf = plan_file_from_json(j, presets, a.trials);
  }

  const std::size_t total = pf.plan.trials.size();
  const auto result = run_experiment(pf.plan, pf.sim, [&](const TrialRecord& r) {
    if (a.quiet) return;
    if (r.timed_out) {
      std::fprintf(stderr, "[%zu/%zu] %s: timeout\n", r.index + 1, total, r.group.c_str());
    } else {
      std::fprintf(stderr, "[%zu/%zu] %s: error %+.2f mm\n", r.index + 1, total, r.group.c_str(),
                   r.error_mm);
    }
  });
  std::cout << to_string(pf.plan.family) << ", " << total << " trials\n";
  write_summary(std::cout, result.summary);
  if (!a.csv.empty()) {
    auto out = open_out(a.csv);
    write_csv(out, result.trials);
  }
  return result.summary.timeouts > 0 ? 3 : 0;
}

struct EstimateArgs {
  std::string cloud, liquid, liquids;
};

int estimate(const EstimateArgs& a) {
  const auto presets = presets_from(a.liquids);
  const auto rep = estimate_offline(a.cloud, find_liquid(presets, a.liquid));
  write_report(std::cout, rep);
  return 0;
}

struct RenderArgs {
  std::string liquid = "water", cup = "blue", out, liquids;
  double height_mm = 60.0;
  std::uint64_t seed = 1;
  bool noise_free = false;
};

int render(const RenderArgs& a) {
  const auto presets = presets_from(a.liquids);
  SensorModel sensor;
  if (a.noise_free) sensor.sigma_point = 0.0;
  const CupSpec cup = cup_from_json(Json(a.cup));
  const WorldState w = make_world(find_liquid(presets, a.liquid), cup, default_bottles()[0], 0.0,
                                  a.height_mm * 1e-3, 0.0);
  const auto frame = DepthCamera(sensor, cup).render(w, a.seed);
  write_cloud_file(a.out, frame.cloud);
  std::printf("wrote %zu points to %s\n", frame.cloud.size(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated depth-based pouring: closed-loop trials, experiments, offline estimates"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run one closed-loop pour from a scenario file");
  s->add_option("scenario", sim.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  s->add_option("--seed", sim.seed, "Override the scenario seed");
  s->add_option("--csv", sim.csv, "Write the trial row as CSV");
  s->add_option("--log", sim.log, "Write the command log (timestamp,phase,wrist_angle_rad)");
  s->add_option("--export-cloud", sim.cloud, "Write the first rendered frame as a point cloud");
  s->add_option("--liquids", sim.liquids, "Liquid preset file")->check(CLI::ExistingFile);

  ExperimentArgs exp;
  auto* e = app.add_subcommand("experiment", "Run an experiment plan or a standard family");
  e->add_option("plan", exp.plan,
                "Plan JSON file or family name (Liquids, InitialVolume, TargetHeight, "
                "BottleOpening, Cups, PreFilled)")
      ->required();
  e->add_option("--trials", exp.trials, "Trials per group")->check(CLI::PositiveNumber);
  e->add_option("--seed", exp.seed, "Plan seed");
  e->add_option("--csv", exp.csv, "Write per-trial rows as CSV");
  e->add_option("--liquids", exp.liquids, "Liquid preset file")->check(CLI::ExistingFile);
  e->add_flag("-q,--quiet", exp.quiet, "No per-trial progress on stderr");

  EstimateArgs est;
  auto* o = app.add_subcommand("estimate", "Estimate the liquid height in a recorded point cloud");
  o->add_option("cloud", est.cloud, "Point-cloud file")->required()->check(CLI::ExistingFile);
  o->add_option("--liquid", est.liquid, "Liquid preset name")->required();
  o->add_option("--liquids", est.liquids, "Liquid preset file")->check(CLI::ExistingFile);

  RenderArgs ren;
  auto* r = app.add_subcommand("render", "Render a static cup scene to a point-cloud file");
  r->add_option("--liquid", ren.liquid, "Liquid preset name")->capture_default_str();
  r->add_option("--cup", ren.cup, "Cup name (text, patterned, blue)")->capture_default_str();
  r->add_option("--height-mm", ren.height_mm, "True liquid height")->capture_default_str();
  r->add_option("--seed", ren.seed, "Noise seed")->capture_default_str();
  r->add_flag("--noise-free", ren.noise_free, "Disable depth noise");
  r->add_option("--out", ren.out, "Output point-cloud file")->required();
  r->add_option("--liquids", ren.liquids, "Liquid preset file")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) return simulate(sim);
    if (*e) return experiment(exp);
    if (*o) return estimate(est);
    if (*r) return render(ren);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}
