#pragma once

// Liquid descriptions and the refraction correction that maps the apparent
// (depth-sensor) height of a transparent liquid to its true height.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "pour/errors.hpp"
#include "pour/geometry.hpp"

namespace pour {

enum class Opacity { Opaque, Transparent };

struct LiquidSpec {
  std::string name;
  Opacity opacity = Opacity::Opaque;
  double n_l = 1.0;  // index of refraction, used for transparent liquids only
  double surface_noise_scale = 1.0;  // simulation-only disturbance multiplier

  bool transparent() const { return opacity == Opacity::Transparent; }
};

enum class EstimateSource { Corrected, Direct };

struct HeightEstimate {
  double h = 0.0;         // meters
  double variance = 0.0;  // meters^2
  double timestamp = 0.0;
  EstimateSource source = EstimateSource::Direct;
};

inline constexpr double kMinRefractiveIndex = 1.0 + 1e-6;
// Standard deviation of a single raw height measurement, meters.
inline constexpr double kDefaultRawSigma = 0.2e-3;

inline void validate(const LiquidSpec& liquid) {
  if (liquid.transparent() && !(liquid.n_l > kMinRefractiveIndex)) {
    throw InvalidRefractiveIndex("liquid '" + liquid.name + "': index of refraction must exceed 1");
  }
  if (!(liquid.surface_noise_scale >= 1.0)) {
    throw InvalidConfig("liquid '" + liquid.name + "': surface_noise_scale must be >= 1");
  }
}

/// Factor f with h = f·h_r for a transparent liquid of index n_l seen at
/// incidence angle alpha:
///
///   f = sqrt(n² − 1 + cos²α) / (sqrt(n² − 1 + cos²α) − cos α)
///
/// f(n, 0) = n / (n − 1) and f → 1 as alpha → π/2.
inline double correction_factor(double n_l, double alpha) {
  if (!(n_l > kMinRefractiveIndex)) {
    throw InvalidRefractiveIndex("index of refraction " + std::to_string(n_l) +
                                 " must exceed 1 + 1e-6");
  }
  if (!(alpha >= 0.0 && alpha < std::numbers::pi / 2.0)) {
    throw InvalidConfig("incidence angle must lie in [0, pi/2)");
  }
  const double c = std::cos(alpha);
  const double s = std::sqrt(n_l * n_l - 1.0 + c * c);
  return s / (s - c);
}

/// Inverse map used by the synthetic camera: where a surface at true height h
/// appears in depth data.
inline double apparent_height(double h, double n_l, double alpha) {
  return h / correction_factor(n_l, alpha);
}

inline HeightEstimate correct_height(const RawHeightMeasurement& raw, const LiquidSpec& liquid,
                                     double raw_sigma = kDefaultRawSigma) {
  if (raw.point_count == 0) throw NoLiquidVisible("raw measurement has no supporting points");
  HeightEstimate est;
  est.timestamp = raw.timestamp;
  if (!liquid.transparent()) {
    est.h = raw.h_r;
    est.variance = raw_sigma * raw_sigma;
    est.source = EstimateSource::Direct;
    return est;
  }
  const double f = correction_factor(liquid.n_l, raw.alpha);
  est.h = f * raw.h_r;
  est.variance = f * f * raw_sigma * raw_sigma;
  est.source = EstimateSource::Corrected;
  return est;
}

// Indices are textbook values for visible light; carbonation only scales
// the simulated surface noise.
inline std::vector<LiquidSpec> default_liquids() {
  return {
      {"water", Opacity::Transparent, 1.333, 1.0},
      {"carbonated_water", Opacity::Transparent, 1.333, 2.0},
      {"olive_oil", Opacity::Transparent, 1.47, 1.0},
      {"milk", Opacity::Opaque, 1.0, 1.0},
      {"orange_juice", Opacity::Opaque, 1.0, 1.0},
  };
}

inline const char* to_string(Opacity o) {
  return o == Opacity::Opaque ? "opaque" : "transparent";
}

}  // namespace pour
