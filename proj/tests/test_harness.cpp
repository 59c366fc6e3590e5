#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "pour/config.hpp"
#include "pour/harness.hpp"

using namespace pour;

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

ExperimentPlan small_plan() {
  const auto l = default_liquids();
  const auto cups = default_cups();
  const auto bottles = default_bottles();
  ExperimentPlan p;
  p.trials = {{{l[3], cups[2], bottles[0], 400, 0, 30, 1}, "milk"},
              {{l[3], cups[2], bottles[0], 400, 0, 30, 2}, "milk"},
              {{l[0], cups[2], bottles[0], 400, 0, 30, 1}, "water"}};
  return p;
}

}  // namespace

TEST(Volume, HeightErrorToMl) {
  const auto cups = default_cups();
  EXPECT_NEAR(height_error_to_volume(5.41, cups[2]), 23.9, 0.2);
  EXPECT_DOUBLE_EQ(height_error_to_volume(0.0, cups[2]), 0.0);
  // Cylinder of radius 3 cm and height 1 cm.
  EXPECT_NEAR(height_error_to_volume(10.0, cups[1]), std::numbers::pi * 9.0 * 1.0, 1e-12);
  EXPECT_NEAR(height_error_to_volume(10.0, cups[1]), 28.3, 0.05);
}

TEST(Plan, FamiliesHaveExpectedGroups) {
  const PlanOptions opt{2, 5};
  EXPECT_EQ(make_plan(Family::Liquids, opt).trials.size(), 10u);
  EXPECT_EQ(make_plan(Family::InitialVolume, opt).trials.size(), 16u);
  EXPECT_EQ(make_plan(Family::TargetHeight, opt).trials.size(), 16u);
  EXPECT_EQ(make_plan(Family::BottleOpening, opt).trials.size(), 8u);
  EXPECT_EQ(make_plan(Family::Cups, opt).trials.size(), 12u);
  EXPECT_EQ(make_plan(Family::PreFilled, opt).trials.size(), 8u);
  EXPECT_THROW(make_plan(Family::Custom, opt), InvalidPlan);
}

TEST(Plan, RandomDrawsComeFromTheValueSetsAndKeepHeadroom) {
  const auto plan = make_plan(Family::Liquids, {40, 3});
  for (const auto& t : plan.trials) {
    const auto& s = t.scenario;
    EXPECT_EQ(std::fmod(s.initial_volume_ml, 50.0), 0.0);
    EXPECT_GE(s.initial_volume_ml, 200.0);
    EXPECT_LE(s.initial_volume_ml, 500.0);
    EXPECT_EQ(std::fmod(s.target_mm, 10.0), 0.0);
    EXPECT_GE(s.target_mm, 20.0);
    EXPECT_LE(s.target_mm, 70.0);
    const double pour_ml = s.target_mm / 10.0 * std::numbers::pi * 3.75 * 3.75;
    EXPECT_GE(s.initial_volume_ml, pour_ml + 100.0);
  }
}

TEST(Plan, PrefilledLeavesTenMillimetres) {
  for (const auto& t : make_plan(Family::PreFilled, {20, 8}).trials) {
    if (t.group.find("prefilled") == std::string::npos) {
      EXPECT_EQ(t.scenario.prefill_mm, 0.0);
      continue;
    }
    EXPECT_GE(t.scenario.prefill_mm, 10.0);
    EXPECT_LE(t.scenario.prefill_mm, 30.0);
    EXPECT_GE(t.scenario.target_mm, t.scenario.prefill_mm + 10.0);
  }
}

TEST(Plan, SameSeedSamePlan) {
  const auto a = make_plan(Family::Cups, {5, 77});
  const auto b = make_plan(Family::Cups, {5, 77});
  const auto c = make_plan(Family::Cups, {5, 78});
  ASSERT_EQ(a.trials.size(), b.trials.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].scenario.seed, b.trials[i].scenario.seed);
    EXPECT_EQ(a.trials[i].scenario.target_mm, b.trials[i].scenario.target_mm);
    differs = differs || a.trials[i].scenario.seed != c.trials[i].scenario.seed;
  }
  EXPECT_TRUE(differs);
}

TEST(Plan, HeadroomViolationRejected) {
  ExperimentPlan p = small_plan();
  p.trials[0].scenario.initial_volume_ml = 200;
  p.trials[0].scenario.target_mm = 70;  // needs 309 ml + 100 ml
  EXPECT_THROW(validate(p), InvalidPlan);
  p.trials[0].scenario.target_mm = 20;  // 88 ml + 100 ml fits in 200 ml
  EXPECT_NO_THROW(validate(p));
  p.trials[0].scenario.prefill_mm = 25;
  EXPECT_THROW(validate(p), InvalidPlan);
}

TEST(Stats, MatchTwoPassRecomputation) {
  std::vector<TrialRecord> rows;
  const double errs[] = {1.2, -0.4, 2.5, 3.1, 0.0, -1.7};
  for (int i = 0; i < 6; ++i) {
    TrialRecord r;
    r.index = i;
    r.group = i < 4 ? "a" : "b";
    r.scenario.cup = default_cups()[2];
    r.error_mm = errs[i];
    r.error_ml = height_error_to_volume(errs[i], r.scenario.cup);
    rows.push_back(r);
  }
  TrialRecord t;
  t.group = "a";
  t.timed_out = true;
  rows.push_back(t);

  const auto s = summarize(rows);
  ASSERT_EQ(s.groups.size(), 2u);
  EXPECT_EQ(s.timeouts, 1u);
  const auto* a = s.find("a");
  ASSERT_NE(a, nullptr);
  EXPECT_EQ(a->trials, 5u);
  EXPECT_EQ(a->completed, 4u);
  const double mean = (1.2 + 0.4 + 2.5 + 3.1) / 4.0;
  double ss = 0.0;
  for (double e : {1.2, 0.4, 2.5, 3.1}) ss += (e - mean) * (e - mean);
  EXPECT_NEAR(a->mean_abs_mm, mean, 1e-12);
  EXPECT_NEAR(a->std_abs_mm, std::sqrt(ss / 3.0), 1e-12);
  EXPECT_NEAR(a->mean_signed_mm, (1.2 - 0.4 + 2.5 + 3.1) / 4.0, 1e-12);
  EXPECT_DOUBLE_EQ(a->max_abs_mm, 3.1);
  EXPECT_GE(a->max_abs_mm, a->mean_abs_mm);
  EXPECT_NEAR(s.find("b")->mean_abs_mm, 0.85, 1e-12);
}

TEST(Experiment, CsvRowsMatchTrialsAndRecomputeMeans) {
  const auto res = run_experiment(small_plan());
  const std::string csv = to_csv(res.trials);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kCsvHeader);
  std::map<std::string, std::vector<double>> errors;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto cells = split(line);
    ASSERT_EQ(cells.size(), 13u);
    errors[cells[2]].push_back(std::stod(cells[9]));
    const double target = std::stod(cells[7]), achieved = std::stod(cells[8]);
    EXPECT_NEAR(std::stod(cells[9]), achieved - target, 2e-4);
    ++rows;
  }
  EXPECT_EQ(rows, res.trials.size());
  for (const auto& [group, errs] : errors) {
    double sum = 0.0;
    for (double e : errs) sum += std::abs(e);
    EXPECT_NEAR(res.summary.find(group)->mean_abs_mm, sum / errs.size(), 1e-3);
  }
}

TEST(Experiment, TimeoutIsFlaggedNotFatal) {
  SimConfig cfg;
  cfg.time_limit = 3.0;
  const auto res = run_experiment(small_plan(), cfg);
  ASSERT_EQ(res.trials.size(), 3u);
  EXPECT_EQ(res.summary.timeouts, 3u);
  for (const auto& t : res.trials) EXPECT_TRUE(t.timed_out);
  EXPECT_NE(to_csv(res.trials).find("timeout"), std::string::npos);
}

TEST(Experiment, SameOrderEveryRun) {
  const auto a = run_experiment(small_plan());
  const auto b = run_experiment(small_plan());
  EXPECT_EQ(to_csv(a.trials), to_csv(b.trials));
  for (std::size_t i = 0; i < a.trials.size(); ++i) EXPECT_EQ(a.trials[i].index, i);
}

TEST(Offline, OpaqueAndTransparentRoundTrips) {
  SensorModel s;
  s.sigma_point = 0.0;
  const auto cup = default_cups()[2];
  const auto l = default_liquids();
  const std::string path = ::testing::TempDir() + "/pour_offline.xyz";

  const auto milk_world = make_world(l[3], cup, default_bottles()[0], 0, 0.06, 0.6);
  write_cloud_file(path, DepthCamera(s, cup).render(milk_world, 1).cloud);
  EXPECT_NEAR(estimate_offline(path, l[3]).estimate.h, 0.060, 0.0001);

  const auto water_world = make_world(l[0], cup, default_bottles()[0], 0, 0.06, 0.6);
  write_cloud_file(path, DepthCamera(s, cup).render(water_world, 1).cloud);
  const auto rep = estimate_offline(path, l[0]);
  EXPECT_LT(rep.raw.h_r, 0.030);
  EXPECT_NEAR(rep.estimate.h, 0.060, 0.0005);
  std::ostringstream out;
  write_report(out, rep);
  EXPECT_NE(out.str().find("refraction corrected"), std::string::npos);
  std::remove(path.c_str());
}

TEST(Offline, MalformedFileNamesLine) {
  const std::string path = ::testing::TempDir() + "/pour_bad.xyz";
  std::ofstream(path) << "POINTS 2\n0 0 0\nbad line\n";
  try {
    estimate_offline(path, default_liquids()[3]);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 3:", 0), 0u);
  }
  std::remove(path.c_str());
}

TEST(Config, LiquidPresetsRoundTrip) {
  Json j;
  for (const auto& l : default_liquids()) j["liquids"].push_back(to_json(l));
  const auto back = liquids_from_json(j);
  ASSERT_EQ(back.size(), 5u);
  EXPECT_EQ(back[1].name, "carbonated_water");
  EXPECT_DOUBLE_EQ(back[1].surface_noise_scale, 2.0);
  EXPECT_TRUE(back[2].transparent());
  EXPECT_FALSE(back[4].transparent());
}

TEST(Config, ScenarioWithOverrides) {
  const Json j = Json::parse(R"({
    "liquid": "olive_oil", "cup": {"name": "mug", "inner_radius_mm": 40, "height_mm": 95},
    "bottle": "wide_opening", "initial_volume_ml": 450, "prefill_mm": 12, "target_mm": 50,
    "seed": 3, "sim": {"sensor": {"latency_s": 0.3}, "controller": {"kp": 4}, "filter": {"q": 2e-5}}
  })");
  const auto f = scenario_file_from_json(j, default_liquids());
  EXPECT_EQ(f.scenario.liquid.name, "olive_oil");
  EXPECT_NEAR(f.scenario.cup.inner_radius, 0.040, 1e-15);
  EXPECT_EQ(f.scenario.bottle.name, "wide_opening");
  EXPECT_EQ(f.scenario.seed, 3u);
  EXPECT_DOUBLE_EQ(f.sim.sensor.latency, 0.3);
  EXPECT_DOUBLE_EQ(f.sim.controller.kp, 4.0);
  EXPECT_DOUBLE_EQ(f.sim.filter.q, 2e-5);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  const auto presets = default_liquids();
  EXPECT_THROW(scenario_from_json(Json::parse(R"({"liquid": "water", "targt_mm": 3})"), presets),
               InvalidConfig);
  EXPECT_THROW(scenario_from_json(Json::parse(R"({"liquid": "lemonade"})"), presets), InvalidConfig);
  EXPECT_THROW(liquid_from_json(Json::parse(R"({"name": "x", "opacity": "transparent", "n_l": 1.0})")),
               InvalidRefractiveIndex);
  EXPECT_THROW(sim_config_from_json(Json::parse(R"({"controller": {"kp": -1}})")), InvalidConfig);
  EXPECT_THROW(plan_file_from_json(Json::parse(R"({"family": "Spills"})"), presets), InvalidPlan);
}

TEST(Config, ExplicitPlanEnforcesHeadroom) {
  const auto presets = default_liquids();
  const Json ok = Json::parse(R"({"family": "Custom", "trials": [
      {"group": "g", "liquid": "milk", "initial_volume_ml": 300, "target_mm": 40}]})");
  EXPECT_EQ(plan_file_from_json(ok, presets).plan.trials.size(), 1u);
  const Json bad = Json::parse(R"({"family": "Custom", "trials": [
      {"group": "g", "liquid": "milk", "initial_volume_ml": 250, "target_mm": 40}]})");
  EXPECT_THROW(plan_file_from_json(bad, presets), InvalidPlan);
}

TEST(Config, ShippedSampleFilesLoad) {
  const std::string dir = POUR_CONFIG_DIR;
  const auto presets = load_liquids(dir + "/liquids.json");
  EXPECT_EQ(presets.size(), 5u);
  EXPECT_NO_THROW(load_scenario(dir + "/water_blue_cup.json", presets));
  EXPECT_NO_THROW(load_scenario(dir + "/milk_prefilled_custom_cup.json", presets));
  EXPECT_EQ(load_plan(dir + "/liquids_plan.json", presets, 1).plan.trials.size(), 5u);
  EXPECT_EQ(load_plan(dir + "/latency_plan.json", presets).plan.trials.size(), 4u);
}
