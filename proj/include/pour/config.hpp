#pragma once

// JSON loaders for liquid presets, scenarios, experiment plans and simulator
// overrides. Field names are listed in README.md; unknown keys are rejected.

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "pour/errors.hpp"
#include "pour/harness.hpp"
#include "pour/optics.hpp"
#include "pour/sim.hpp"

namespace pour {

using Json = nlohmann::json;

namespace detail {

inline void check_keys(const Json& j, const std::string& what,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InvalidConfig(what + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw InvalidConfig(what + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_opt(const Json& j, const char* key, T& out, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw InvalidConfig(what + ": key '" + key + "' has the wrong type");
  }
}

inline void read_scaled(const Json& j, const char* key, double& out, double scale,
                        const std::string& what) {
  double v = out / scale;
  read_opt(j, key, v, what);
  out = v * scale;
}

}  // namespace detail

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline LiquidSpec liquid_from_json(const Json& j) {
  detail::check_keys(j, "liquid", {"name", "opacity", "n_l", "surface_noise_scale"});
  LiquidSpec l;
  detail::read_opt(j, "name", l.name, "liquid");
  if (l.name.empty()) throw InvalidConfig("liquid: 'name' is required");
  std::string opacity = "opaque";
  detail::read_opt(j, "opacity", opacity, "liquid '" + l.name + "'");
  if (opacity == "opaque") {
    l.opacity = Opacity::Opaque;
  } else if (opacity == "transparent") {
    l.opacity = Opacity::Transparent;
  } else {
    throw InvalidConfig("liquid '" + l.name + "': opacity must be 'opaque' or 'transparent'");
  }
  detail::read_opt(j, "n_l", l.n_l, "liquid '" + l.name + "'");
  detail::read_opt(j, "surface_noise_scale", l.surface_noise_scale, "liquid '" + l.name + "'");
  validate(l);
  return l;
}

inline Json to_json(const LiquidSpec& l) {
  return {{"name", l.name}, {"opacity", to_string(l.opacity)}, {"n_l", l.n_l},
          {"surface_noise_scale", l.surface_noise_scale}};
}

/// {"liquids": [ {...}, ... ]}
inline std::vector<LiquidSpec> liquids_from_json(const Json& j) {
  detail::check_keys(j, "liquid presets", {"liquids"});
  if (!j.contains("liquids") || !j.at("liquids").is_array()) {
    throw InvalidConfig("liquid presets: 'liquids' must be an array");
  }
  std::vector<LiquidSpec> out;
  for (const auto& item : j.at("liquids")) out.push_back(liquid_from_json(item));
  return out;
}

inline std::vector<LiquidSpec> load_liquids(const std::string& path) {
  return liquids_from_json(load_json_file(path));
}

inline const LiquidSpec& find_liquid(const std::vector<LiquidSpec>& presets,
                                     const std::string& name) {
  return detail::preset(presets, name);
}

inline CupSpec cup_from_json(const Json& j) {
  if (j.is_string()) {
    for (const auto& c : default_cups()) {
      if (c.name == j.get<std::string>()) return c;
    }
    throw InvalidConfig("unknown cup '" + j.get<std::string>() + "'");
  }
  detail::check_keys(j, "cup", {"name", "inner_radius_mm", "height_mm"});
  CupSpec c;
  detail::read_opt(j, "name", c.name, "cup");
  detail::read_scaled(j, "inner_radius_mm", c.inner_radius, 1e-3, "cup");
  detail::read_scaled(j, "height_mm", c.height, 1e-3, "cup");
  validate(c);
  return c;
}

inline BottleSpec bottle_from_json(const Json& j) {
  if (j.is_string()) {
    for (const auto& b : default_bottles()) {
      if (b.name == j.get<std::string>()) return b;
    }
    throw InvalidConfig("unknown bottle '" + j.get<std::string>() + "'");
  }
  detail::check_keys(j, "bottle", {"name", "opening_diameter_mm", "capacity_ml"});
  BottleSpec b;
  detail::read_opt(j, "name", b.name, "bottle");
  detail::read_scaled(j, "opening_diameter_mm", b.opening_diameter, 1e-3, "bottle");
  detail::read_opt(j, "capacity_ml", b.capacity, "bottle");
  validate(b);
  return b;
}

inline Scenario scenario_from_json(const Json& j, const std::vector<LiquidSpec>& presets,
                                   std::initializer_list<const char*> extra_keys = {}) {
  std::vector<const char*> keys = {"liquid", "cup", "bottle", "initial_volume_ml",
                                   "prefill_mm", "target_mm", "seed"};
  keys.insert(keys.end(), extra_keys.begin(), extra_keys.end());
  if (!j.is_object()) throw InvalidConfig("scenario: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) ==
        keys.end()) {
      throw InvalidConfig("scenario: unknown key '" + key + "'");
    }
  }
  Scenario s;
  if (!j.contains("liquid")) throw InvalidConfig("scenario: 'liquid' is required");
  const Json& lj = j.at("liquid");
  s.liquid = lj.is_string() ? find_liquid(presets, lj.get<std::string>()) : liquid_from_json(lj);
  if (j.contains("cup")) s.cup = cup_from_json(j.at("cup"));
  if (j.contains("bottle")) s.bottle = bottle_from_json(j.at("bottle"));
  detail::read_opt(j, "initial_volume_ml", s.initial_volume_ml, "scenario");
  detail::read_opt(j, "prefill_mm", s.prefill_mm, "scenario");
  detail::read_opt(j, "target_mm", s.target_mm, "scenario");
  detail::read_opt(j, "seed", s.seed, "scenario");
  return s;
}

/// Overrides on top of SimConfig defaults:
/// {"sensor": {...}, "controller": {...}, "filter": {...}, "time_limit_s": 120}
inline SimConfig sim_config_from_json(const Json& j, SimConfig cfg = {}) {
  detail::check_keys(j, "sim", {"sensor", "controller", "filter", "time_limit_s", "raw_sigma_mm"});
  if (j.contains("sensor")) {
    const Json& s = j.at("sensor");
    detail::check_keys(s, "sim.sensor",
                       {"sigma_point_mm", "frame_rate_hz", "latency_s", "dropout_probability",
                        "stall_probability", "stall_duration_s", "camera_horizontal_m",
                        "camera_vertical_m", "camera_azimuth_rad"});
    auto& m = cfg.sensor;
    detail::read_scaled(s, "sigma_point_mm", m.sigma_point, 1e-3, "sim.sensor");
    detail::read_opt(s, "frame_rate_hz", m.frame_rate, "sim.sensor");
    detail::read_opt(s, "latency_s", m.latency, "sim.sensor");
    detail::read_opt(s, "dropout_probability", m.dropout_probability, "sim.sensor");
    detail::read_opt(s, "stall_probability", m.stall_probability, "sim.sensor");
    detail::read_opt(s, "stall_duration_s", m.stall_duration, "sim.sensor");
    detail::read_opt(s, "camera_horizontal_m", m.camera_pose.horizontal, "sim.sensor");
    detail::read_opt(s, "camera_vertical_m", m.camera_pose.vertical, "sim.sensor");
    detail::read_opt(s, "camera_azimuth_rad", m.camera_pose.azimuth, "sim.sensor");
    validate(m);
  }
  if (j.contains("controller")) {
    const Json& c = j.at("controller");
    detail::check_keys(c, "sim.controller",
                       {"kp", "max_angle", "min_angle", "max_rate", "min_rate", "stale_timeout_s",
                        "slow_rate", "return_rate"});
    auto& m = cfg.controller;
    detail::read_opt(c, "kp", m.kp, "sim.controller");
    detail::read_opt(c, "max_angle", m.max_angle, "sim.controller");
    detail::read_opt(c, "min_angle", m.min_angle, "sim.controller");
    detail::read_opt(c, "max_rate", m.max_rate, "sim.controller");
    detail::read_opt(c, "min_rate", m.min_rate, "sim.controller");
    detail::read_opt(c, "stale_timeout_s", m.stale_timeout, "sim.controller");
    detail::read_opt(c, "slow_rate", m.slow_rate, "sim.controller");
    detail::read_opt(c, "return_rate", m.return_rate, "sim.controller");
    validate(m);
  }
  if (j.contains("filter")) {
    const Json& f = j.at("filter");
    detail::check_keys(f, "sim.filter", {"q", "r", "initial_rate_sigma"});
    detail::read_opt(f, "q", cfg.filter.q, "sim.filter");
    detail::read_opt(f, "r", cfg.filter.r, "sim.filter");
    detail::read_opt(f, "initial_rate_sigma", cfg.filter.initial_rate_sigma, "sim.filter");
    validate(cfg.filter);
  }
  detail::read_opt(j, "time_limit_s", cfg.time_limit, "sim");
  detail::read_scaled(j, "raw_sigma_mm", cfg.raw_sigma, 1e-3, "sim");
  if (!(cfg.time_limit > 0.0) || !(cfg.raw_sigma > 0.0)) {
    throw InvalidConfig("sim: time_limit_s and raw_sigma_mm must be > 0");
  }
  return cfg;
}

struct ScenarioFile {
  Scenario scenario;
  SimConfig sim;
};

/// A scenario plus an optional "sim" override block.
inline ScenarioFile scenario_file_from_json(const Json& j, const std::vector<LiquidSpec>& presets) {
  ScenarioFile out;
  out.scenario = scenario_from_json(j, presets, {"sim"});
  if (j.contains("sim")) out.sim = sim_config_from_json(j.at("sim"));
  return out;
}

inline ScenarioFile load_scenario(const std::string& path, const std::vector<LiquidSpec>& presets) {
  return scenario_file_from_json(load_json_file(path), presets);
}

struct PlanFile {
  ExperimentPlan plan;
  SimConfig sim;
};

/// Either a generated family,
///   {"family": "Liquids", "trials_per_group": 10, "seed": 2017}
/// or an explicit trial list,
///   {"family": "Custom", "trials": [{"group": "a", "liquid": "water", ...}, ...]}
/// Both accept a "sim" override block. trials_override > 0 replaces
/// trials_per_group.
inline PlanFile plan_file_from_json(const Json& j, const std::vector<LiquidSpec>& presets,
                                    int trials_override = 0) {
  detail::check_keys(j, "plan", {"family", "trials_per_group", "seed", "trials", "sim"});
  PlanFile out;
  std::string name;
  detail::read_opt(j, "family", name, "plan");
  const auto family = parse_family(name);
  if (!family) throw InvalidPlan("plan: unknown family '" + name + "'");
  if (j.contains("sim")) out.sim = sim_config_from_json(j.at("sim"));

  if (j.contains("trials")) {
    if (!j.at("trials").is_array()) throw InvalidPlan("plan: 'trials' must be an array");
    out.plan.family = *family;
    for (const auto& t : j.at("trials")) {
      PlannedTrial pt;
      pt.scenario = scenario_from_json(t, presets, {"group"});
      pt.group = t.value("group", pt.scenario.liquid.name);
      out.plan.trials.push_back(std::move(pt));
    }
    validate(out.plan);
    return out;
  }
  PlanOptions opt;
  detail::read_opt(j, "trials_per_group", opt.trials_per_group, "plan");
  detail::read_opt(j, "seed", opt.seed, "plan");
  if (trials_override > 0) opt.trials_per_group = trials_override;
  out.plan = make_plan(*family, opt, presets);
  return out;
}

inline PlanFile load_plan(const std::string& path, const std::vector<LiquidSpec>& presets,
                          int trials_override = 0) {
  return plan_file_from_json(load_json_file(path), presets, trials_override);
}

}  // namespace pour
