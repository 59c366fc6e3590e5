#pragma once

// Pour controller: proportional control on the height error, plus three
// policies. No detection slows the pour, a stale estimate freezes the wrist,
// and reaching the target rotates the bottle back home.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pour/errors.hpp"
#include "pour/tracking.hpp"

namespace pour {

enum class ControllerPhase { Pouring, SlowedNoDetection, HoldStale, Returning, Done };

inline const char* to_string(ControllerPhase p) {
  switch (p) {
    case ControllerPhase::Pouring: return "Pouring";
    case ControllerPhase::SlowedNoDetection: return "SlowedNoDetection";
    case ControllerPhase::HoldStale: return "HoldStale";
    case ControllerPhase::Returning: return "Returning";
    case ControllerPhase::Done: return "Done";
  }
  return "?";
}

struct ControllerConfig {
  // Wrist angular velocity per meter of height error, rad/(s·m).
  double kp = 3.0;
  double max_angle = 2.4;   // rad
  double min_angle = 0.6;   // rad, home position the pour starts from and returns to
  double max_rate = 0.3;    // rad/s
  double min_rate = 0.05;   // rad/s, floor of the proportional law while below target
  double stale_timeout = 0.25;  // s
  double slow_rate = 0.02;  // rad/s
  double return_rate = 1.0; // rad/s
  double stop_epsilon = 0.0;  // m
};

inline void validate(const ControllerConfig& c) {
  if (!(c.kp > 0.0)) throw InvalidConfig("controller: kp must be > 0");
  if (!(c.min_angle < c.max_angle)) throw InvalidConfig("controller: min_angle must be < max_angle");
  if (!(c.max_rate > 0.0) || !(c.slow_rate > 0.0) || !(c.return_rate > 0.0) ||
      !(c.min_rate > 0.0) || c.min_rate > c.max_rate) {
    throw InvalidConfig("controller: rates must be > 0 and min_rate <= max_rate");
  }
  if (!(c.stale_timeout > 0.0)) throw InvalidConfig("controller: stale_timeout must be > 0");
  if (!(c.stop_epsilon >= 0.0)) throw InvalidConfig("controller: stop_epsilon must be >= 0");
}

struct PourCommand {
  double wrist_angle = 0.0;
  ControllerPhase phase = ControllerPhase::Pouring;
  double timestamp = 0.0;
};

struct NoLiquid {};
struct Stale {};
using Observation = std::variant<FilterState, NoLiquid, Stale>;

class PourController {
 public:
  explicit PourController(ControllerConfig cfg, double start_time = 0.0)
      : cfg_(cfg), angle_(cfg.min_angle), last_time_(start_time) {
    validate(cfg_);
  }

  PourCommand step(const Observation& obs, double target_h, double now) {
    if (!(target_h > 0.0)) {
      throw InvalidTarget("target height must be > 0, got " + std::to_string(target_h));
    }
    if (now < last_time_) {
      throw NonMonotonicTimestamp("controller: time went backwards");
    }
    const double dt = now - last_time_;
    last_time_ = now;

    if (phase_ == ControllerPhase::Done) return command(now);
    if (phase_ == ControllerPhase::Returning) {
      return_home(dt);
      return command(now);
    }

    if (const auto* est = std::get_if<FilterState>(&obs)) {
      const double error = target_h - est->h;
      if (error <= cfg_.stop_epsilon) {
        phase_ = ControllerPhase::Returning;
        return_home(dt);
      } else {
        phase_ = ControllerPhase::Pouring;
        const double rate = std::clamp(cfg_.kp * error, cfg_.min_rate, cfg_.max_rate);
        advance(rate * dt);
      }
    } else if (std::holds_alternative<NoLiquid>(obs)) {
      phase_ = ControllerPhase::SlowedNoDetection;
      advance(cfg_.slow_rate * dt);
    } else {
      phase_ = ControllerPhase::HoldStale;
    }
    return command(now);
  }

  ControllerPhase phase() const { return phase_; }
  double angle() const { return angle_; }
  const ControllerConfig& config() const { return cfg_; }

 private:
  void advance(double delta) { angle_ = std::min(cfg_.max_angle, angle_ + delta); }

  // Done is entered on the step after the wrist has arrived home.
  void return_home(double dt) {
    if (angle_ <= cfg_.min_angle) {
      angle_ = cfg_.min_angle;
      if (returned_home_) {
        phase_ = ControllerPhase::Done;
        return;
      }
    }
    angle_ = std::max(cfg_.min_angle, angle_ - cfg_.return_rate * dt);
    returned_home_ = angle_ <= cfg_.min_angle;
  }

  PourCommand command(double now) const { return {angle_, phase_, now}; }

  ControllerConfig cfg_;
  double angle_;
  double last_time_;
  ControllerPhase phase_ = ControllerPhase::Pouring;
  bool returned_home_ = false;
};

struct LoopSummary {
  double final_estimated_h = 0.0;
  std::size_t commands_issued = 0;
  std::optional<double> time_to_done;
  bool complete = false;
};

struct LoopResult {
  std::vector<PourCommand> commands;
  LoopSummary summary;
};

/// Drives a controller from a recorded tracker stream. The controller ticks
/// every control_dt from the first track point up to the first tick at or after
/// the last one; each tick sees the latest point at or before it, or Stale when
/// that point is older than stale_timeout.
/// A return that is under way when the stream ends is run to completion.
inline LoopResult run_loop(std::span<const TrackPoint> stream, double target_h,
                           const ControllerConfig& cfg, double control_dt = 0.01) {
  if (!(target_h > 0.0)) throw InvalidTarget("target height must be > 0");
  if (!(control_dt > 0.0)) throw InvalidDt("control_dt must be > 0");
  LoopResult result;
  if (stream.empty()) return result;
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (stream[i].state.last_update < stream[i - 1].state.last_update) {
      throw NonMonotonicTimestamp("run_loop: stream timestamps must be non-decreasing");
    }
  }

  const double t0 = stream.front().state.last_update;
  const double t_end = stream.back().state.last_update;
  PourController ctrl(cfg, t0);
  std::size_t next = 0;
  std::optional<TrackPoint> latest;
  double last_estimate_h = stream.front().state.h;
  const auto last_tick = static_cast<std::size_t>(std::ceil((t_end - t0) / control_dt - 1e-9));

  for (std::size_t k = 0;; ++k) {
    const double now = t0 + static_cast<double>(k) * control_dt;
    // Past the end of the stream only an already-triggered return may finish.
    if (k > last_tick && ctrl.phase() != ControllerPhase::Returning) break;
    while (next < stream.size() && stream[next].state.last_update <= now + 1e-12) {
      latest = stream[next++];
    }
    Observation obs = Stale{};
    if (latest && now - latest->state.last_update <= cfg.stale_timeout) {
      if (latest->measured) {
        obs = latest->state;
        last_estimate_h = latest->state.h;
      } else {
        obs = NoLiquid{};
      }
    }
    const PourCommand cmd = ctrl.step(obs, target_h, now);
    result.commands.push_back(cmd);
    if (cmd.phase == ControllerPhase::Done) {
      result.summary.time_to_done = now - t0;
      result.summary.complete = true;
      break;
    }
  }
  result.summary.final_estimated_h = last_estimate_h;
  result.summary.commands_issued = result.commands.size();
  return result;
}

}  // namespace pour
