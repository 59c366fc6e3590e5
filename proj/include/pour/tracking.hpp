#pragma once

// Constant-velocity Kalman filter over (height, height rate). Only the height
// is observed; the fill rate is inferred.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pour/errors.hpp"
#include "pour/optics.hpp"

namespace pour {

struct FilterParams {
  double q = 1e-5;                  // process-noise spectral density, m^2/s^3
  double r = 0.5e-3 * 0.5e-3;       // fallback measurement variance, m^2
  double dt_default = 1.0 / 30.0;   // seconds
  double initial_rate_sigma = 0.05; // m/s, prior on the rate at initialization
};

inline void validate(const FilterParams& p) {
  if (!(p.q > 0.0) || !(p.r > 0.0) || !(p.dt_default > 0.0) || !(p.initial_rate_sigma > 0.0)) {
    throw InvalidConfig("filter parameters q, r, dt_default must be > 0");
  }
}

struct FilterState {
  double h = 0.0;
  double h_dot = 0.0;
  Eigen::Matrix2d P = Eigen::Matrix2d::Zero();
  double last_update = 0.0;

  Eigen::Vector2d x() const { return {h, h_dot}; }
};

/// Process noise of a continuous white-acceleration model integrated over dt.
inline Eigen::Matrix2d process_noise(double q, double dt) {
  Eigen::Matrix2d Q;
  Q << dt * dt * dt / 3.0, dt * dt / 2.0,
       dt * dt / 2.0,      dt;
  return q * Q;
}

inline FilterState predict(const FilterState& s, double dt, const FilterParams& params) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw InvalidDt("predict: dt must be positive and finite, got " + std::to_string(dt));
  }
  Eigen::Matrix2d F;
  F << 1.0, dt,
       0.0, 1.0;
  FilterState out;
  out.h = s.h + dt * s.h_dot;
  out.h_dot = s.h_dot;
  out.P = F * s.P * F.transpose() + process_noise(params.q, dt);
  out.P = 0.5 * (out.P + out.P.transpose());
  out.last_update = s.last_update + dt;
  return out;
}

/// Measurement variance actually used for z.
inline double measurement_variance(const HeightEstimate& z, const FilterParams& params) {
  return z.variance > 0.0 ? z.variance : params.r;
}

/// Kalman update with H = [1 0]. Covariance uses the Joseph form so it stays
/// symmetric positive semi-definite.
inline FilterState update(const FilterState& s, const HeightEstimate& z,
                          const FilterParams& params) {
  const double R = measurement_variance(z, params);
  const Eigen::Vector2d PHt = s.P.col(0);
  const double S = s.P(0, 0) + R;
  const Eigen::Vector2d K = PHt / S;
  const double innovation = z.h - s.h;

  FilterState out = s;
  out.h = s.h + K(0) * innovation;
  out.h_dot = s.h_dot + K(1) * innovation;

  Eigen::Matrix2d IKH = Eigen::Matrix2d::Identity();
  IKH(0, 0) -= K(0);
  IKH(1, 0) -= K(1);
  out.P = IKH * s.P * IKH.transpose() + R * K * K.transpose();
  out.P = 0.5 * (out.P + out.P.transpose());
  return out;
}

inline FilterState initial_state(const HeightEstimate& z, const FilterParams& params) {
  FilterState s;
  s.h = z.h;
  s.h_dot = 0.0;
  s.P << measurement_variance(z, params), 0.0,
         0.0, params.initial_rate_sigma * params.initial_rate_sigma;
  s.last_update = z.timestamp;
  return s;
}

struct TrackPoint {
  FilterState state;
  bool measured = true;
};

/// Incremental filter. Feed estimates (or gaps) in non-decreasing time order.
class Tracker {
 public:
  explicit Tracker(FilterParams params = {}) : params_(params) { validate(params_); }

  TrackPoint push(const HeightEstimate& z) {
    check_order(z.timestamp);
    if (!state_) {
      state_ = initial_state(z, params_);
      return {*state_, true};
    }
    advance_to(z.timestamp);
    state_ = update(*state_, z, params_);
    return {*state_, true};
  }

  /// A frame without a usable measurement. Returns nullopt before the first
  /// measurement has seeded the filter.
  std::optional<TrackPoint> push_gap(double timestamp) {
    check_order(timestamp);
    if (!state_) return std::nullopt;
    advance_to(timestamp);
    return TrackPoint{*state_, false};
  }

  const std::optional<FilterState>& state() const { return state_; }
  const FilterParams& params() const { return params_; }

 private:
  void check_order(double t) {
    if (last_seen_ && t < *last_seen_) {
      throw NonMonotonicTimestamp("tracker: timestamp " + std::to_string(t) + " precedes " +
                                  std::to_string(*last_seen_));
    }
    last_seen_ = t;
  }

  void advance_to(double t) {
    const double dt = t - state_->last_update;
    if (dt > 0.0) {
      FilterState next = predict(*state_, dt, params_);
      next.last_update = t;
      state_ = next;
    }
  }

  FilterParams params_;
  std::optional<FilterState> state_;
  std::optional<double> last_seen_;
};

/// One frame's perception result; nullopt estimate marks a frame where no
/// liquid was visible.
struct TrackInput {
  double timestamp = 0.0;
  std::optional<HeightEstimate> estimate;
};

inline std::vector<TrackPoint> track(std::span<const TrackInput> inputs,
                                     const FilterParams& params) {
  Tracker tracker(params);
  std::vector<TrackPoint> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.estimate) {
      HeightEstimate z = *in.estimate;
      z.timestamp = in.timestamp;
      out.push_back(tracker.push(z));
    } else if (auto gap = tracker.push_gap(in.timestamp)) {
      out.push_back(*gap);
    }
  }
  return out;
}

inline std::vector<TrackPoint> track(std::span<const HeightEstimate> estimates,
                                     const FilterParams& params) {
  Tracker tracker(params);
  std::vector<TrackPoint> out;
  out.reserve(estimates.size());
  for (const auto& z : estimates) out.push_back(tracker.push(z));
  return out;
}

}  // namespace pour
