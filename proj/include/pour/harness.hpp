#pragma once

// Experiment plans, batch runner, per-group statistics and CSV reports.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pour/cloud_io.hpp"
#include "pour/errors.hpp"
#include "pour/geometry.hpp"
#include "pour/optics.hpp"
#include "pour/sim.hpp"

namespace pour {

enum class Family { Liquids, InitialVolume, TargetHeight, BottleOpening, Cups, PreFilled, Custom };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::Liquids: return "Liquids";
    case Family::InitialVolume: return "InitialVolume";
    case Family::TargetHeight: return "TargetHeight";
    case Family::BottleOpening: return "BottleOpening";
    case Family::Cups: return "Cups";
    case Family::PreFilled: return "PreFilled";
    case Family::Custom: return "Custom";
  }
  return "?";
}

inline std::optional<Family> parse_family(const std::string& s) {
  for (Family f : {Family::Liquids, Family::InitialVolume, Family::TargetHeight,
                   Family::BottleOpening, Family::Cups, Family::PreFilled, Family::Custom}) {
    if (s == to_string(f)) return f;
  }
  return std::nullopt;
}

struct PlannedTrial {
  Scenario scenario;
  std::string group;  // statistics are aggregated per group label
};

struct ExperimentPlan {
  Family family = Family::Custom;
  std::vector<PlannedTrial> trials;
};

inline constexpr double kHeadroomMl = 100.0;

/// Liquid the bottle must give up to raise the cup from prefill to target.
inline double pour_volume_ml(const Scenario& s) {
  return std::max(0.0, s.target_mm - s.prefill_mm) * 1e-3 * s.cup.area() * 1e6;
}

inline bool has_headroom(const Scenario& s) {
  return s.initial_volume_ml >= pour_volume_ml(s) + kHeadroomMl;
}

inline void validate(const ExperimentPlan& plan) {
  for (std::size_t i = 0; i < plan.trials.size(); ++i) {
    const Scenario& s = plan.trials[i].scenario;
    const std::string where = "trial " + std::to_string(i) + ": ";
    validate(s.liquid);
    validate(s.cup);
    validate(s.bottle);
    if (!(s.target_mm > 0.0) || s.target_mm * 1e-3 > s.cup.height) {
      throw InvalidPlan(where + "target height must lie in (0, cup height]");
    }
    if (s.prefill_mm < 0.0 || s.prefill_mm >= s.target_mm) {
      throw InvalidPlan(where + "prefill must be >= 0 and below the target");
    }
    if (s.initial_volume_ml > s.bottle.capacity) {
      throw InvalidPlan(where + "initial volume exceeds the bottle capacity");
    }
    if (!has_headroom(s)) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "bottle holds %.1f ml but the pour needs %.1f ml plus %.0f ml headroom",
                    s.initial_volume_ml, pour_volume_ml(s), kHeadroomMl);
      throw InvalidPlan(where + buf);
    }
  }
}

struct PlanOptions {
  int trials_per_group = 10;
  std::uint64_t seed = 2017;
};

namespace detail {

inline const LiquidSpec& preset(const std::vector<LiquidSpec>& all, const std::string& name) {
  for (const auto& l : all) {
    if (l.name == name) return l;
  }
  throw InvalidConfig("unknown liquid preset '" + name + "'");
}

inline std::string format_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

class PlanBuilder {
 public:
  PlanBuilder(Family family, const PlanOptions& opt)
      : opt_(opt), rng_(make_rng(opt.seed, static_cast<std::uint64_t>(family), 0x9e3779b9ULL)) {
    plan_.family = family;
  }

  // Draws initial volume and target from the standard value sets, redrawing
  // until the headroom constraint holds.
  void add_random(const LiquidSpec& liquid, const CupSpec& cup, const BottleSpec& bottle,
                  const std::string& group, bool prefilled = false) {
    static constexpr double kVolumes[] = {200, 250, 300, 350, 400, 450, 500};
    static constexpr double kTargets[] = {20, 30, 40, 50, 60, 70};
    std::uniform_int_distribution<int> vol(0, 6), tgt(0, 5), pre(10, 30);
    for (int i = 0; i < opt_.trials_per_group; ++i) {
      Scenario s{liquid, cup, bottle};
      do {
        s.initial_volume_ml = kVolumes[vol(rng_)];
        s.target_mm = kTargets[tgt(rng_)];
        s.prefill_mm = prefilled ? static_cast<double>(pre(rng_)) : 0.0;
      } while (!has_headroom(s) || s.target_mm < s.prefill_mm + 10.0);
      push(s, group);
    }
  }

  void add_fixed(Scenario s, const std::string& group) {
    for (int i = 0; i < opt_.trials_per_group; ++i) push(s, group);
  }

  ExperimentPlan finish() {
    validate(plan_);
    return std::move(plan_);
  }

 private:
  void push(Scenario s, const std::string& group) {
    s.seed = rng_();
    plan_.trials.push_back({std::move(s), group});
  }

  PlanOptions opt_;
  std::mt19937_64 rng_;
  ExperimentPlan plan_;
};

}  // namespace detail

/// Builds one of the six standard families. Groups are labelled
/// "<liquid>" or "<liquid>/<condition>".
inline ExperimentPlan make_plan(Family family, const PlanOptions& opt = {},
                                const std::vector<LiquidSpec>& liquids = default_liquids()) {
  if (opt.trials_per_group < 1) throw InvalidPlan("trials per group must be >= 1");
  const auto cups = default_cups();
  const auto bottles = default_bottles();
  const CupSpec& blue = cups[2];
  const BottleSpec& small = bottles[0];
  const std::vector<LiquidSpec> pair = {detail::preset(liquids, "water"),
                                        detail::preset(liquids, "milk")};
  detail::PlanBuilder b(family, opt);

  switch (family) {
    case Family::Liquids:
      for (const auto& l : liquids) b.add_random(l, blue, small, l.name);
      break;
    case Family::InitialVolume:
      for (const auto& l : pair) {
        for (double v : {350.0, 400.0, 450.0, 500.0}) {
          b.add_fixed(Scenario{l, blue, small, v, 0.0, 40.0},
                      l.name + "/" + detail::format_num(v) + "ml");
        }
      }
      break;
    case Family::TargetHeight:
      for (const auto& l : pair) {
        for (double t : {30.0, 40.0, 50.0, 60.0}) {
          b.add_fixed(Scenario{l, blue, small, 400.0, 0.0, t},
                      l.name + "/" + detail::format_num(t) + "mm");
        }
      }
      break;
    case Family::BottleOpening:
      for (const auto& l : pair) {
        for (const auto& bottle : bottles) b.add_random(l, blue, bottle, l.name + "/" + bottle.name);
      }
      break;
    case Family::Cups:
      for (const auto& l : pair) {
        for (const auto& cup : cups) b.add_random(l, cup, small, l.name + "/" + cup.name);
      }
      break;
    case Family::PreFilled:
      for (const auto& l : pair) {
        b.add_random(l, blue, small, l.name + "/empty", false);
        b.add_random(l, blue, small, l.name + "/prefilled", true);
      }
      break;
    case Family::Custom:
      throw InvalidPlan("the Custom family has no generator; list its trials explicitly");
  }
  return b.finish();
}

/// Volume matching a height error in a cylindrical cup, in ml.
inline double height_error_to_volume(double error_mm, const CupSpec& cup) {
  const double r_cm = cup.inner_radius * 100.0;
  return std::numbers::pi * r_cm * r_cm * error_mm / 10.0;
}

struct TrialRecord {
  std::size_t index = 0;
  std::string family;
  std::string group;
  Scenario scenario;
  bool timed_out = false;
  std::string failure;
  double achieved_mm = 0.0;
  double error_mm = 0.0;  // signed, achieved − target
  double error_ml = 0.0;
  double duration_s = 0.0;
};

struct GroupStats {
  std::string group;
  std::size_t trials = 0;
  std::size_t completed = 0;
  double mean_signed_mm = 0.0;
  double mean_abs_mm = 0.0;
  double std_abs_mm = 0.0;  // sample standard deviation of |error|
  double max_abs_mm = 0.0;
  double mean_abs_ml = 0.0;
};

struct SummaryStats {
  std::vector<GroupStats> groups;  // in order of first appearance in the plan
  std::size_t timeouts = 0;

  const GroupStats* find(const std::string& group) const {
    for (const auto& g : groups) {
      if (g.group == group) return &g;
    }
    return nullptr;
  }
};

struct ExperimentResult {
  std::vector<TrialRecord> trials;
  SummaryStats summary;
};

inline SummaryStats summarize(const std::vector<TrialRecord>& trials) {
  SummaryStats out;
  std::map<std::string, std::vector<const TrialRecord*>> by_group;
  for (const auto& t : trials) {
    if (!by_group.count(t.group)) out.groups.push_back({t.group});
    by_group[t.group].push_back(&t);
    if (t.timed_out) ++out.timeouts;
  }
  for (auto& g : out.groups) {
    const auto& rows = by_group[g.group];
    g.trials = rows.size();
    double sum = 0.0, sum_abs = 0.0, sum_ml = 0.0;
    for (const auto* r : rows) {
      if (r->timed_out) continue;
      ++g.completed;
      sum += r->error_mm;
      sum_abs += std::abs(r->error_mm);
      sum_ml += std::abs(r->error_ml);
      g.max_abs_mm = std::max(g.max_abs_mm, std::abs(r->error_mm));
    }
    if (g.completed == 0) continue;
    const double n = static_cast<double>(g.completed);
    g.mean_signed_mm = sum / n;
    g.mean_abs_mm = sum_abs / n;
    g.mean_abs_ml = sum_ml / n;
    if (g.completed > 1) {
      double ss = 0.0;
      for (const auto* r : rows) {
        if (r->timed_out) continue;
        const double d = std::abs(r->error_mm) - g.mean_abs_mm;
        ss += d * d;
      }
      g.std_abs_mm = std::sqrt(ss / (n - 1.0));
    }
  }
  return out;
}

inline void fill_record(TrialRecord& rec, const TrialResult& r) {
  rec.achieved_mm = r.final_h * 1e3;
  rec.error_mm = r.signed_error * 1e3;
  rec.error_ml = height_error_to_volume(rec.error_mm, rec.scenario.cup);
  rec.duration_s = r.duration;
}

inline TrialRecord run_trial(const PlannedTrial& planned, std::size_t index, Family family,
                             const SimConfig& cfg) {
  TrialRecord rec;
  rec.index = index;
  rec.family = to_string(family);
  rec.group = planned.group;
  rec.scenario = planned.scenario;
  try {
    fill_record(rec, run_closed_loop(planned.scenario, planned.scenario.seed, cfg));
  } catch (const TrialTimeout& e) {
    rec.timed_out = true;
    rec.failure = e.what();
  }
  return rec;
}

/// Runs every trial in plan order. A trial that times out is flagged and the
/// batch carries on.
template <typename Progress>
ExperimentResult run_experiment(const ExperimentPlan& plan, const SimConfig& cfg,
                                Progress&& progress) {
  validate(plan);
  ExperimentResult out;
  out.trials.reserve(plan.trials.size());
  for (std::size_t i = 0; i < plan.trials.size(); ++i) {
    out.trials.push_back(run_trial(plan.trials[i], i, plan.family, cfg));
    progress(out.trials.back());
  }
  out.summary = summarize(out.trials);
  return out;
}

inline ExperimentResult run_experiment(const ExperimentPlan& plan, const SimConfig& cfg = {}) {
  return run_experiment(plan, cfg, [](const TrialRecord&) {});
}

inline constexpr const char* kCsvHeader =
    "trial,family,liquid,cup,bottle,init_volume_ml,prefill_mm,target_mm,achieved_mm,error_mm,"
    "error_ml,duration_s,seed";

/// Timed-out trials keep their row; the measured columns read "timeout".
inline void write_csv(std::ostream& out, const std::vector<TrialRecord>& trials) {
  out << kCsvHeader << '\n';
  char buf[256];
  for (const auto& t : trials) {
    const Scenario& s = t.scenario;
    std::snprintf(buf, sizeof buf, "%zu,%s,%s,%s,%s,%.1f,%.2f,%.2f,", t.index, t.family.c_str(),
                  s.liquid.name.c_str(), s.cup.name.c_str(), s.bottle.name.c_str(),
                  s.initial_volume_ml, s.prefill_mm, s.target_mm);
    out << buf;
    if (t.timed_out) {
      out << "timeout,timeout,timeout,timeout,";
    } else {
      std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.3f,", t.achieved_mm, t.error_mm,
                    t.error_ml, t.duration_s);
      out << buf;
    }
    out << s.seed << '\n';
  }
}

inline std::string to_csv(const std::vector<TrialRecord>& trials) {
  std::ostringstream os;
  write_csv(os, trials);
  return os.str();
}

inline void write_summary(std::ostream& out, const SummaryStats& stats) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %5s %10s %10s %9s %9s %10s\n", "group", "n", "mean|e|mm",
                "signed mm", "std mm", "max mm", "mean|e|ml");
  out << buf;
  for (const auto& g : stats.groups) {
    std::snprintf(buf, sizeof buf, "%-28s %5zu %10.2f %10.2f %9.2f %9.2f %10.1f\n",
                  g.group.c_str(), g.completed, g.mean_abs_mm, g.mean_signed_mm, g.std_abs_mm,
                  g.max_abs_mm, g.mean_abs_ml);
    out << buf;
  }
  if (stats.timeouts > 0) out << stats.timeouts << " trial(s) timed out\n";
}

struct OfflineReport {
  SceneModel scene;
  RawHeightMeasurement raw;
  HeightEstimate estimate;
  LiquidSpec liquid;
};

inline OfflineReport estimate_offline(const PointCloud& cloud, const LiquidSpec& liquid,
                                      const SceneConfig& cfg = {},
                                      double raw_sigma = kDefaultRawSigma) {
  validate(liquid);
  OfflineReport rep;
  rep.liquid = liquid;
  rep.scene = detect_scene(cloud, cfg);
  rep.raw = measure_raw_height(cloud, rep.scene.cup, rep.scene.table, cfg.diameter_scale);
  rep.estimate = correct_height(rep.raw, liquid, raw_sigma);
  return rep;
}

inline OfflineReport estimate_offline(const std::string& cloud_file, const LiquidSpec& liquid,
                                      const SceneConfig& cfg = {},
                                      double raw_sigma = kDefaultRawSigma) {
  return estimate_offline(read_cloud_file(cloud_file), liquid, cfg, raw_sigma);
}

inline void write_report(std::ostream& out, const OfflineReport& rep) {
  const auto& t = rep.scene.table;
  const auto& c = rep.scene.cup;
  char buf[256];
  std::snprintf(buf, sizeof buf, "table   normal (%.4f, %.4f, %.4f) offset %.4f m, %zu inliers\n",
                t.normal.x(), t.normal.y(), t.normal.z(), t.offset, t.inlier_count);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "cup     axis point (%.4f, %.4f, %.4f) radius %.1f mm height %.1f mm, %zu inliers\n",
                c.axis_point.x(), c.axis_point.y(), c.axis_point.z(), c.radius * 1e3,
                c.height * 1e3, c.inlier_count);
  out << buf;
  std::snprintf(buf, sizeof buf, "raw     h_r %.2f mm from %zu points, alpha %.2f deg\n",
                rep.raw.h_r * 1e3, rep.raw.point_count, rep.raw.alpha * 180.0 / std::numbers::pi);
  out << buf;
  std::snprintf(buf, sizeof buf, "height  %.2f +/- %.2f mm (%s, liquid %s)\n",
                rep.estimate.h * 1e3, std::sqrt(rep.estimate.variance) * 1e3,
                rep.estimate.source == EstimateSource::Corrected ? "refraction corrected" : "direct",
                rep.liquid.name.c_str());
  out << buf;
}

}  // namespace pour
