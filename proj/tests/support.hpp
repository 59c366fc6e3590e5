#pragma once

// Synthetic point generators for tests. Built directly from geometric
// definitions so they do not share code with the simulator's camera.

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "pour/geometry.hpp"

namespace testing_support {

using pour::Point3;
using pour::PointCloud;

// Camera frame used by the hand-built scenes: the table is the plane z = 0.75
// (camera looking along +z, table 0.75 m away), cup axis parallel to z.
inline const Eigen::Vector3d kTableNormalTowardCamera(0.0, 0.0, -1.0);
inline constexpr double kTableDistance = 0.75;

// Table-frame point (x, y, elevation) → camera frame point.
inline Point3 from_table(double x, double y, double elevation) {
  return {x, y, kTableDistance - elevation};
}

inline PointCloud plane_patch(std::mt19937_64& rng, int n, double half, double sigma) {
  std::uniform_real_distribution<double> u(-half, half);
  std::normal_distribution<double> g(0.0, 1.0);
  PointCloud c;
  for (int i = 0; i < n; ++i) c.points.push_back(from_table(u(rng), u(rng), sigma * g(rng)));
  return c;
}

inline void add_cylinder_shell(PointCloud& c, std::mt19937_64& rng, double cx, double cy,
                               double r, double height, int n, double sigma,
                               double arc_from = 0.0, double arc_to = 2.0 * std::numbers::pi) {
  std::uniform_real_distribution<double> th(arc_from, arc_to), z(0.0, height);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double t = th(rng);
    const double rr = r + sigma * g(rng);
    c.points.push_back(from_table(cx + rr * std::cos(t), cy + rr * std::sin(t), z(rng)));
  }
}

inline void add_disk(PointCloud& c, std::mt19937_64& rng, double cx, double cy, double r,
                     double elevation, int n, double sigma) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double rr = r * std::sqrt(u(rng));
    const double t = 2.0 * std::numbers::pi * u(rng);
    c.points.push_back(from_table(cx + rr * std::cos(t), cy + rr * std::sin(t),
                                  elevation + sigma * g(rng)));
  }
}

inline pour::PlaneModel exact_table() {
  pour::PlaneModel p;
  p.normal = kTableNormalTowardCamera;
  p.offset = -kTableDistance;
  return p;
}

inline pour::CylinderModel exact_cup(double cx, double cy, double r, double height) {
  pour::CylinderModel c;
  c.axis_point = from_table(cx, cy, 0.0);
  c.axis_direction = kTableNormalTowardCamera;
  c.radius = r;
  c.height = height;
  return c;
}

}  // namespace testing_support
