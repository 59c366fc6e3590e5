#pragma once

// Deterministic closed-loop pouring world: bottle and cup volumes, a
// parametric outflow model driven by the wrist angle, and a synthetic depth
// camera that renders the table, the cup, and the liquid surface as a noisy
// point cloud. Transparent surfaces are rendered at their refracted
// (apparent) height.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pour/control.hpp"
#include "pour/errors.hpp"
#include "pour/geometry.hpp"
#include "pour/optics.hpp"
#include "pour/tracking.hpp"

namespace pour {

namespace detail {

// Engine seeded from all 64 bits of each key.
inline std::mt19937_64 make_rng(std::uint64_t a, std::uint64_t b, std::uint64_t salt) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(a), hi(a), lo(b), hi(b), lo(salt), hi(salt)};
  return std::mt19937_64(seq);
}

}  // namespace detail

struct CupSpec {
  double inner_radius = 0.0375;  // m
  double height = 0.10;          // m
  std::string name = "blue";

  double area() const { return std::numbers::pi * inner_radius * inner_radius; }
  /// Liquid volume in ml for a fill height in meters.
  double volume_ml(double height_m) const { return area() * height_m * 1e6; }
  double height_for_volume(double ml) const { return ml * 1e-6 / area(); }
};

struct BottleSpec {
  double opening_diameter = 0.025;  // m
  double capacity = 750.0;          // ml
  std::string name = "small_opening";

  double opening_area_cm2() const {
    const double r_cm = opening_diameter * 100.0 / 2.0;
    return std::numbers::pi * r_cm * r_cm;
  }
};

// Bottom diameters of roughly 5, 6 and 7.5 cm.
inline std::vector<CupSpec> default_cups() {
  return {{0.025, 0.10, "text"}, {0.030, 0.10, "patterned"}, {0.0375, 0.10, "blue"}};
}

inline std::vector<BottleSpec> default_bottles() {
  return {{0.025, 750.0, "small_opening"}, {0.045, 750.0, "wide_opening"}};
}

inline void validate(const CupSpec& c) {
  if (!(c.inner_radius > 0.0) || !(c.height > 0.0)) {
    throw InvalidConfig("cup '" + c.name + "': radius and height must be > 0");
  }
}

inline void validate(const BottleSpec& b) {
  if (!(b.opening_diameter > 0.0) || !(b.capacity > 0.0)) {
    throw InvalidConfig("bottle '" + b.name + "': opening and capacity must be > 0");
  }
}

/// Flow out of a tilted bottle:
///
///   flow [ml/s] = coefficient · opening_area [cm²] · max(0, tilt − θ₀)^exponent
///
/// where the spill threshold θ₀ rises linearly from threshold_full (full
/// bottle) to threshold_empty (empty bottle).
struct OutflowModel {
  double coefficient = 100.0;  // ml / (s · cm² · rad^exponent)
  double exponent = 1.5;
  double threshold_full = 0.7;   // rad
  double threshold_empty = 2.1;  // rad

  double spill_threshold(double fill_fraction) const {
    const double f = std::clamp(fill_fraction, 0.0, 1.0);
    return threshold_empty - (threshold_empty - threshold_full) * f;
  }

  double flow(double tilt, double bottle_volume, const BottleSpec& bottle) const {
    if (bottle_volume <= 0.0) return 0.0;
    const double excess = tilt - spill_threshold(bottle_volume / bottle.capacity);
    if (excess <= 0.0) return 0.0;
    return coefficient * bottle.opening_area_cm2() * std::pow(excess, exponent);
  }
};

struct WorldState {
  LiquidSpec liquid;
  CupSpec cup;
  BottleSpec bottle;
  double bottle_volume = 0.0;  // ml
  double cup_volume = 0.0;     // ml
  double cup_height = 0.0;     // m, true liquid height
  double wrist_angle = 0.0;    // rad
  double time = 0.0;           // s
};

inline WorldState make_world(const LiquidSpec& liquid, const CupSpec& cup, const BottleSpec& bottle,
                             double bottle_volume_ml, double prefill_m, double wrist_angle) {
  validate(liquid);
  validate(cup);
  validate(bottle);
  if (bottle_volume_ml < 0.0 || bottle_volume_ml > bottle.capacity) {
    throw InvalidConfig("initial bottle volume must lie in [0, capacity]");
  }
  if (prefill_m < 0.0 || prefill_m > cup.height) {
    throw InvalidConfig("initial cup height must lie in [0, cup height]");
  }
  WorldState w;
  w.liquid = liquid;
  w.cup = cup;
  w.bottle = bottle;
  w.bottle_volume = bottle_volume_ml;
  w.cup_volume = cup.volume_ml(prefill_m);
  w.cup_height = prefill_m;
  w.wrist_angle = wrist_angle;
  return w;
}

/// Advances the world by dt with the wrist held at wrist_angle. Every ml that
/// leaves the bottle lands in the cup; the cup never overfills.
inline WorldState step_world(const WorldState& state, double wrist_angle, double dt,
                             const OutflowModel& outflow = {}) {
  WorldState next = state;
  next.wrist_angle = wrist_angle;
  next.time = state.time + dt;
  const double rate = outflow.flow(wrist_angle, state.bottle_volume, state.bottle);
  const double room = std::max(0.0, state.cup.volume_ml(state.cup.height) - state.cup_volume);
  const double moved = std::min({rate * dt, state.bottle_volume, room});
  if (moved > 0.0) {
    next.bottle_volume = state.bottle_volume - moved;
    next.cup_volume = state.cup_volume + moved;
    next.cup_height = std::min(state.cup.height, state.cup.height_for_volume(next.cup_volume));
  }
  return next;
}

/// Camera placement relative to the cup: the camera sits `horizontal` meters
/// from the cup axis and `vertical` meters above the table, aimed at the cup
/// axis at `look_at_height`.
struct CameraPose {
  double horizontal = 0.25;
  double vertical = 0.75;
  double look_at_height = 0.05;
  double azimuth = 0.0;  // rad, rotates the camera about the cup axis
};

struct SensorModel {
  double point_density = 1.0 / (0.003 * 0.003);  // points per m² of surface
  double sigma_point = 0.003;                    // m, depth noise along each ray
  double frame_rate = 30.0;                      // Hz
  double latency = 0.2;                          // s, capture to estimate
  CameraPose camera_pose;
  double table_half_extent = 0.12;  // m, rendered table patch around the cup
  // Per-frame probability that the surface returns no depth at all.
  double dropout_probability = 0.02;
  // Per-frame probability that processing stalls for stall_duration.
  double stall_probability = 0.005;
  double stall_duration = 0.4;  // s
};

inline void validate(const SensorModel& s) {
  if (!(s.point_density > 0.0) || !(s.sigma_point >= 0.0) || !(s.frame_rate > 0.0) ||
      !(s.latency >= 0.0) || !(s.table_half_extent > 0.0) || !(s.camera_pose.vertical > 0.0) ||
      !(s.camera_pose.horizontal >= 0.0)) {
    throw InvalidConfig("sensor model: density, frame rate and pose must be positive");
  }
  if (s.dropout_probability < 0.0 || s.dropout_probability > 1.0 || s.stall_probability < 0.0 ||
      s.stall_probability > 1.0 || s.stall_duration < 0.0) {
    throw InvalidConfig("sensor model: probabilities must lie in [0, 1]");
  }
}

enum class PointLabel : std::uint8_t { Table, OuterWall, InnerWall, Surface };

struct RenderOptions {
  bool surface_visible = true;  // false drops every liquid-surface return
  bool interior_only = false;   // skip the table and outer wall (region-of-interest crop)
};

struct LabeledCloud {
  PointCloud cloud;
  std::vector<PointLabel> labels;
};

/// Renders a single upright cup on a table. Geometry is built in a table
/// frame (cup bottom center at the origin, z up) and transformed into the
/// camera frame.
class DepthCamera {
 public:
  DepthCamera(SensorModel sensor, CupSpec cup) : sensor_(std::move(sensor)), cup_(std::move(cup)) {
    validate(sensor_);
    validate(cup_);
    const auto& pose = sensor_.camera_pose;
    camera_ = Eigen::Vector3d(-pose.horizontal * std::sin(pose.azimuth),
                              -pose.horizontal * std::cos(pose.azimuth), pose.vertical);
    const Eigen::Vector3d target(0.0, 0.0, pose.look_at_height);
    const Eigen::Vector3d z = (target - camera_).normalized();
    Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ());
    if (x.norm() < 1e-9) x = Eigen::Vector3d::UnitX();
    x.normalize();
    const Eigen::Vector3d y = z.cross(x);
    to_camera_.row(0) = x.transpose();
    to_camera_.row(1) = y.transpose();
    to_camera_.row(2) = z.transpose();
    spacing_ = 1.0 / std::sqrt(sensor_.point_density);
    build_static();
  }

  const SensorModel& sensor() const { return sensor_; }
  const CupSpec& cup() const { return cup_; }

  /// Camera position in the table frame.
  const Eigen::Vector3d& camera_position() const { return camera_; }

  Point3 to_camera(const Eigen::Vector3d& table_point) const {
    return to_camera_ * (table_point - camera_);
  }

  /// Elevation at which a surface of true height h appears at table-frame
  /// position (x, y). Solves e = h / f(α(e)) by fixed-point iteration, where α
  /// is the incidence angle of the ray to (x, y, e).
  double apparent_elevation(const LiquidSpec& liquid, double h, double x, double y) const {
    if (!liquid.transparent() || h <= 0.0) return h;
    double e = h / 3.0;
    for (int i = 0; i < 50; ++i) {
      const double next = apparent_height(h, liquid.n_l, ray_incidence(x, y, e));
      if (std::abs(next - e) < 1e-15) {
        e = next;
        break;
      }
      e = next;
    }
    return e;
  }

  LabeledCloud render(const WorldState& state, std::uint64_t seed, std::uint64_t frame_id = 0,
                      RenderOptions opts = {}) const {
    LabeledCloud out;
    out.cloud.frame_id = frame_id;
    out.cloud.timestamp = state.time;
    const std::size_t expected = static_table_.size() + static_wall_.size() + 2048;
    out.cloud.points.reserve(expected);
    out.labels.reserve(expected);

    auto rng = detail::make_rng(seed, frame_id, 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> unit(0.0, 1.0);
    const double sigma = sensor_.sigma_point;

    const auto emit = [&](const Eigen::Vector3d& p_table, PointLabel label, double noise_scale) {
      Point3 p = to_camera(p_table);
      if (sigma > 0.0) {
        const double eps = unit(rng) * sigma * noise_scale;
        p *= 1.0 + eps / p.norm();
      }
      out.cloud.points.push_back(p);
      out.labels.push_back(label);
    };

    if (!opts.interior_only) {
      for (const auto& p : static_table_) emit(p, PointLabel::Table, 1.0);
      for (const auto& p : static_wall_) emit(p, PointLabel::OuterWall, 1.0);
    }

    const double h = std::clamp(state.cup_height, 0.0, cup_.height);
    const double r = cup_.inner_radius;

    // Inner wall above the liquid, seen through the opening.
    const double arc_step = spacing_ / r;
    const int n_arc = std::max(8, static_cast<int>(std::ceil(2.0 * std::numbers::pi / arc_step)));
    for (int i = 0; i < n_arc; ++i) {
      const double th = (i + 0.5) * 2.0 * std::numbers::pi / n_arc;
      const Eigen::Vector3d outward(std::cos(th), std::sin(th), 0.0);
      for (double z = h + 0.5 * spacing_; z < cup_.height; z += spacing_) {
        const Eigen::Vector3d p(r * outward.x(), r * outward.y(), z);
        if (outward.dot(camera_ - p) >= 0.0) continue;  // faces away from the camera
        if (!enters_through_opening(p)) continue;
        emit(p, PointLabel::InnerWall, 1.0);
      }
    }

    if (opts.surface_visible) {
      const double noise_scale = state.liquid.surface_noise_scale;
      for (const auto& xy : surface_grid_) {
        const double e = apparent_elevation(state.liquid, h, xy.x(), xy.y());
        const Eigen::Vector3d p(xy.x(), xy.y(), e);
        if (!enters_through_opening(p)) continue;
        emit(p, PointLabel::Surface, noise_scale);
      }
    }
    return out;
  }

 private:
  // Incidence angle against the vertical for the ray from the camera to (x, y, z).
  double ray_incidence(double x, double y, double z) const {
    const double horiz = std::hypot(x - camera_.x(), y - camera_.y());
    return std::atan2(horiz, camera_.z() - z);
  }

  // True when the segment from the camera to an interior point p crosses the
  // rim plane inside the opening.
  bool enters_through_opening(const Eigen::Vector3d& p) const {
    if (camera_.z() <= cup_.height) return false;
    const double t = (camera_.z() - cup_.height) / (camera_.z() - p.z());
    const Eigen::Vector3d at_rim = camera_ + t * (p - camera_);
    const double r = cup_.inner_radius;
    return at_rim.head<2>().squaredNorm() <= r * r * (1.0 + 1e-12);
  }

  // True when the segment camera→p passes through the solid cup cylinder.
  bool occluded_by_cup(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d d = p - camera_;
    const double r = cup_.inner_radius;
    const double a = d.x() * d.x() + d.y() * d.y();
    const double b = 2.0 * (camera_.x() * d.x() + camera_.y() * d.y());
    const double c = camera_.x() * camera_.x() + camera_.y() * camera_.y() - r * r;
    double t_lo = 0.0, t_hi = 1.0;
    if (a < 1e-18) {
      if (c > 0.0) return false;
    } else {
      const double disc = b * b - 4.0 * a * c;
      if (disc <= 0.0) return false;
      const double sq = std::sqrt(disc);
      t_lo = std::max(t_lo, (-b - sq) / (2.0 * a));
      t_hi = std::min(t_hi, (-b + sq) / (2.0 * a));
    }
    // z(t) = camera.z + t·d.z must lie in [0, height].
    if (std::abs(d.z()) < 1e-18) {
      if (camera_.z() < 0.0 || camera_.z() > cup_.height) return false;
    } else {
      double ta = (0.0 - camera_.z()) / d.z();
      double tb = (cup_.height - camera_.z()) / d.z();
      if (ta > tb) std::swap(ta, tb);
      t_lo = std::max(t_lo, ta);
      t_hi = std::min(t_hi, tb);
    }
    return t_hi - t_lo > 1e-9;
  }

  void build_static() {
    const double r = cup_.inner_radius;
    const double ext = sensor_.table_half_extent;
    const int n = static_cast<int>(std::floor(2.0 * ext / spacing_));
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= n; ++j) {
        const Eigen::Vector3d p(-ext + i * spacing_, -ext + j * spacing_, 0.0);
        if (p.head<2>().norm() <= r) continue;
        if (occluded_by_cup(p)) continue;
        static_table_.push_back(p);
      }
    }

    const int n_arc =
        std::max(8, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r / spacing_)));
    for (int i = 0; i < n_arc; ++i) {
      const double th = (i + 0.5) * 2.0 * std::numbers::pi / n_arc;
      const Eigen::Vector3d outward(std::cos(th), std::sin(th), 0.0);
      for (double z = 0.5 * spacing_; z < cup_.height; z += spacing_) {
        const Eigen::Vector3d p(r * outward.x(), r * outward.y(), z);
        if (outward.dot(camera_ - p) <= 0.0) continue;
        static_wall_.push_back(p);
      }
    }

    const int m = static_cast<int>(std::floor(2.0 * r / spacing_));
    const double start = -0.5 * m * spacing_;
    for (int i = 0; i <= m; ++i) {
      for (int j = 0; j <= m; ++j) {
        const Eigen::Vector2d xy(start + i * spacing_, start + j * spacing_);
        if (xy.norm() < r) surface_grid_.push_back(xy);
      }
    }
  }

  SensorModel sensor_;
  CupSpec cup_;
  Eigen::Vector3d camera_;
  Eigen::Matrix3d to_camera_;
  double spacing_ = 0.003;
  std::vector<Eigen::Vector3d> static_table_;
  std::vector<Eigen::Vector3d> static_wall_;
  std::vector<Eigen::Vector2d> surface_grid_;
};

inline PointCloud render_cloud(const WorldState& state, const SensorModel& sensor,
                               std::uint64_t rng_seed) {
  return DepthCamera(sensor, state.cup).render(state, rng_seed).cloud;
}

struct Scenario {
  LiquidSpec liquid;
  CupSpec cup;
  BottleSpec bottle;
  double initial_volume_ml = 400.0;
  double prefill_mm = 0.0;
  double target_mm = 40.0;
  std::uint64_t seed = 1;
};

struct SimConfig {
  SensorModel sensor;
  OutflowModel outflow;
  ControllerConfig controller;
  FilterParams filter;
  SceneConfig scene;
  double raw_sigma = kDefaultRawSigma;
  double control_dt = 0.01;   // s
  double time_limit = 120.0;  // s of simulated time
  bool record = false;        // keep per-tick command and world logs
};

struct TickLog {
  double time = 0.0;
  double true_h = 0.0;
  std::optional<double> estimated_h;
  PourCommand command;
};

struct TrialResult {
  double final_h = 0.0;   // m, true height at Done
  double target_h = 0.0;  // m
  double signed_error = 0.0;  // m, final − target
  double overshoot = 0.0;     // m, max(0, signed_error)
  double duration = 0.0;      // s
  std::vector<ControllerPhase> phases_visited;  // in first-visit order
  SceneModel scene;
  std::vector<TickLog> log;
};

namespace detail {

struct PendingEstimate {
  double deliver_at = 0.0;
  double captured_at = 0.0;
  std::optional<HeightEstimate> estimate;
};

}  // namespace detail

/// Full perception-control loop:
///   world → depth render → scene/raw height → refraction correction →
///   Kalman tracking (after the sensor latency) → pour controller → world.
/// The table and cup are detected once from the first full frame; later
/// frames are cropped to the cup interior.
inline TrialResult run_closed_loop(const Scenario& scenario, std::uint64_t seed,
                                   const SimConfig& cfg = {}) {
  const double target = scenario.target_mm * 1e-3;
  if (!(target > 0.0)) throw InvalidTarget("scenario target must be > 0");
  if (!(cfg.control_dt > 0.0)) throw InvalidConfig("control_dt must be > 0");

  WorldState world = make_world(scenario.liquid, scenario.cup, scenario.bottle,
                                scenario.initial_volume_ml, scenario.prefill_mm * 1e-3,
                                cfg.controller.min_angle);
  const DepthCamera camera(cfg.sensor, scenario.cup);
  auto events = detail::make_rng(seed, 0, 0xa5a5a5a5ULL);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  TrialResult result;
  result.target_h = target;
  const auto first = camera.render(world, seed, 0);
  result.scene = detect_scene(first.cloud, cfg.scene);

  Tracker tracker(cfg.filter);
  PourController controller(cfg.controller, 0.0);
  std::deque<detail::PendingEstimate> pending;
  const double frame_period = 1.0 / cfg.sensor.frame_rate;
  std::uint64_t frame_id = 0;
  double next_frame = 0.0;
  double last_delivery = 0.0;
  double pipeline_free_at = 0.0;
  bool last_was_gap = false;

  const auto note_phase = [&](ControllerPhase p) {
    if (std::find(result.phases_visited.begin(), result.phases_visited.end(), p) ==
        result.phases_visited.end()) {
      result.phases_visited.push_back(p);
    }
  };

  for (std::uint64_t tick = 0;; ++tick) {
    const double now = static_cast<double>(tick) * cfg.control_dt;
    if (tick > 0) world = step_world(world, controller.angle(), cfg.control_dt, cfg.outflow);
    world.time = now;

    if (now + 1e-12 >= next_frame) {
      const bool dropout = coin(events) < cfg.sensor.dropout_probability;
      const bool stall = coin(events) < cfg.sensor.stall_probability;
      const auto frame = camera.render(world, seed, ++frame_id,
                                       RenderOptions{.surface_visible = !dropout,
                                                     .interior_only = true});
      detail::PendingEstimate item;
      item.captured_at = now;
      if (auto raw = try_measure_raw_height(frame.cloud, result.scene.cup, result.scene.table,
                                            cfg.scene.diameter_scale)) {
        raw->timestamp = now;
        item.estimate = correct_height(*raw, scenario.liquid, cfg.raw_sigma);
      }
      const double ready = now + cfg.sensor.latency + (stall ? cfg.sensor.stall_duration : 0.0);
      item.deliver_at = std::max(ready, pipeline_free_at);
      pipeline_free_at = item.deliver_at;
      pending.push_back(item);
      next_frame += frame_period;
    }

    while (!pending.empty() && pending.front().deliver_at <= now + 1e-12) {
      const auto item = pending.front();
      pending.pop_front();
      last_delivery = item.deliver_at;
      if (item.estimate) {
        tracker.push(*item.estimate);
        last_was_gap = false;
      } else {
        tracker.push_gap(item.captured_at);
        last_was_gap = true;
      }
    }

    Observation obs = Stale{};
    if (now - last_delivery <= cfg.controller.stale_timeout) {
      if (last_was_gap) {
        obs = NoLiquid{};
      } else if (tracker.state()) {
        obs = *tracker.state();
      }
    }
    const PourCommand cmd = controller.step(obs, target, now);
    note_phase(cmd.phase);
    if (cfg.record) {
      TickLog entry;
      entry.time = now;
      entry.true_h = world.cup_height;
      if (tracker.state()) entry.estimated_h = tracker.state()->h;
      entry.command = cmd;
      result.log.push_back(entry);
    }

    if (cmd.phase == ControllerPhase::Done) {
      result.duration = now;
      break;
    }
    if (now >= cfg.time_limit) {
      throw TrialTimeout("trial did not finish within " + std::to_string(cfg.time_limit) +
                         " s of simulated time (seed " + std::to_string(seed) + ")");
    }
  }

  result.final_h = world.cup_height;
  result.signed_error = result.final_h - target;
  result.overshoot = std::max(0.0, result.signed_error);
  return result;
}

}  // namespace pour
