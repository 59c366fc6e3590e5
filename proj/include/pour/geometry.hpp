#pragma once

// Scene parsing for a single depth frame: the table plane, the upright cup
// cylinder standing on it, and the raw liquid-surface height inside the cup.
//
// All functions are pure. Clouds are expressed in the camera frame with the
// camera at the origin (z along the optical axis, y pointing down).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pour/errors.hpp"

namespace pour {

using Point3 = Eigen::Vector3d;

struct PointCloud {
  std::vector<Point3> points;
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;  // seconds

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Plane n·p = offset with n a unit normal oriented toward the camera, so
/// signed_distance() is positive on the camera side.
struct PlaneModel {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitY();
  double offset = 0.0;
  std::size_t inlier_count = 0;

  double signed_distance(const Point3& p) const { return normal.dot(p) - offset; }
};

/// Upright cylinder. axis_point lies on the table plane and axis_direction is
/// the table normal, so elevation along the axis equals elevation above the table.
struct CylinderModel {
  Point3 axis_point = Point3::Zero();
  Eigen::Vector3d axis_direction = Eigen::Vector3d::UnitY();
  double radius = 0.0;
  double height = 0.0;
  std::size_t inlier_count = 0;

  double radial_distance(const Point3& p) const {
    const Eigen::Vector3d d = p - axis_point;
    return (d - d.dot(axis_direction) * axis_direction).norm();
  }
};

struct RawHeightMeasurement {
  double h_r = 0.0;    // apparent height above the inner cup bottom, meters
  double alpha = 0.0;  // incidence angle against the surface normal, radians
  std::size_t point_count = 0;
  double timestamp = 0.0;
};

struct RansacConfig {
  int iterations = 500;
  double inlier_threshold = 0.003;  // meters
  double min_inlier_ratio = 0.2;
  std::uint64_t seed = 1;
  // Circle hypotheses wider than this are rejected by the cylinder search.
  double max_radius = 0.2;
};

namespace detail {

inline void check_ransac_config(const RansacConfig& cfg) {
  if (!(cfg.inlier_threshold > 0.0) || cfg.iterations < 1) {
    throw InvalidConfig("ransac: inlier_threshold must be > 0 and iterations >= 1");
  }
}

// Picks three distinct indices in [0, n).
inline std::array<std::size_t, 3> sample_triple(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t a = pick(rng);
  std::size_t b = pick(rng);
  while (b == a) b = pick(rng);
  std::size_t c = pick(rng);
  while (c == a || c == b) c = pick(rng);
  return {a, b, c};
}

inline bool all_collinear(std::span<const Point3> pts) {
  const Point3& p0 = pts.front();
  std::size_t far = 0;
  double far_d = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d = (pts[i] - p0).squaredNorm();
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }
  if (far_d == 0.0) return true;
  const Eigen::Vector3d dir = (pts[far] - p0).normalized();
  const double tol = 1e-12 * std::sqrt(far_d);
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - p0;
    if ((d - d.dot(dir) * dir).norm() > tol) return false;
  }
  return true;
}

// Least-squares plane through the given points (smallest principal axis).
inline std::optional<std::pair<Eigen::Vector3d, double>> fit_plane_lsq(
    std::span<const Point3> pts) {
  if (pts.size() < 3) return std::nullopt;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  if (eig.info() != Eigen::Success) return std::nullopt;
  Eigen::Vector3d n = eig.eigenvectors().col(0);
  if (!n.allFinite() || n.norm() < 0.5) return std::nullopt;
  n.normalize();
  return std::make_pair(n, n.dot(mean));
}

inline std::size_t count_plane_inliers(std::span<const Point3> pts, const Eigen::Vector3d& n,
                                       double offset, double thr) {
  std::size_t count = 0;
  for (const auto& p : pts) {
    if (std::abs(n.dot(p) - offset) < thr) ++count;
  }
  return count;
}

// Orthonormal basis (u, v) spanning the plane orthogonal to n.
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_basis(const Eigen::Vector3d& n) {
  const Eigen::Vector3d seed =
      std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d u = (seed - seed.dot(n) * n).normalized();
  return {u, n.cross(u)};
}

struct Circle {
  Eigen::Vector2d center;
  double radius;
};

inline std::optional<Circle> circumcircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                                          const Eigen::Vector2d& c) {
  const double d = 2.0 * (a.x() * (b.y() - c.y()) + b.x() * (c.y() - a.y()) +
                          c.x() * (a.y() - b.y()));
  if (std::abs(d) < 1e-18) return std::nullopt;
  const double a2 = a.squaredNorm(), b2 = b.squaredNorm(), c2 = c.squaredNorm();
  const Eigen::Vector2d center((a2 * (b.y() - c.y()) + b2 * (c.y() - a.y()) + c2 * (a.y() - b.y())) / d,
                               (a2 * (c.x() - b.x()) + b2 * (a.x() - c.x()) + c2 * (b.x() - a.x())) / d);
  const double r = (a - center).norm();
  if (!std::isfinite(r)) return std::nullopt;
  return Circle{center, r};
}

// Algebraic (Kasa) circle fit followed by Gauss-Newton on the geometric residual.
inline std::optional<Circle> fit_circle_lsq(std::span<const Eigen::Vector2d> pts) {
  if (pts.size() < 3) return std::nullopt;
  Eigen::MatrixXd A(pts.size(), 3);
  Eigen::VectorXd b(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    A(i, 0) = pts[i].x();
    A(i, 1) = pts[i].y();
    A(i, 2) = 1.0;
    b(i) = pts[i].squaredNorm();
  }
  const Eigen::Vector3d sol = A.colPivHouseholderQr().solve(b);
  Circle c{Eigen::Vector2d(sol(0) / 2.0, sol(1) / 2.0), 0.0};
  const double r2 = sol(2) + c.center.squaredNorm();
  if (!(r2 > 0.0)) return std::nullopt;
  c.radius = std::sqrt(r2);

  for (int it = 0; it < 20; ++it) {
    Eigen::Matrix3d JtJ = Eigen::Matrix3d::Zero();
    Eigen::Vector3d Jtr = Eigen::Vector3d::Zero();
    for (const auto& p : pts) {
      const Eigen::Vector2d d = p - c.center;
      const double dist = d.norm();
      if (dist < 1e-15) continue;
      const double res = dist - c.radius;
      const Eigen::Vector3d J(-d.x() / dist, -d.y() / dist, -1.0);
      JtJ += J * J.transpose();
      Jtr += J * res;
    }
    const Eigen::Vector3d step = JtJ.ldlt().solve(-Jtr);
    if (!step.allFinite()) break;
    c.center += step.head<2>();
    c.radius += step(2);
    if (step.norm() < 1e-13) break;
  }
  if (!(c.radius > 0.0) || !c.center.allFinite()) return std::nullopt;
  return c;
}

}  // namespace detail

/// RANSAC plane fit. The returned normal points toward the camera origin and
/// the winning hypothesis is refined by least squares on its consensus set.
inline PlaneModel fit_plane_ransac(const PointCloud& cloud, const RansacConfig& cfg) {
  detail::check_ransac_config(cfg);
  const std::span<const Point3> pts(cloud.points);
  if (pts.size() < 3) throw DegenerateInput("plane fit needs at least 3 points");
  if (detail::all_collinear(pts)) throw DegenerateInput("plane fit: all points are collinear");

  std::mt19937_64 rng(cfg.seed);
  Eigen::Vector3d best_n = Eigen::Vector3d::Zero();
  double best_offset = 0.0;
  std::size_t best_count = 0;

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto [a, b, c] = pts.size() == 3 ? std::array<std::size_t, 3>{0, 1, 2}
                                           : detail::sample_triple(rng, pts.size());
    Eigen::Vector3d n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
    const double len = n.norm();
    if (!(len > 1e-15)) continue;
    n /= len;
    const double offset = n.dot(pts[a]);
    const std::size_t count = detail::count_plane_inliers(pts, n, offset, cfg.inlier_threshold);
    if (count > best_count) {
      best_count = count;
      best_n = n;
      best_offset = offset;
    }
  }
  if (best_count == 0) throw DegenerateInput("plane fit: no non-degenerate sample");

  // Iterated least squares on the consensus set. The refined plane replaces
  // the hypothesis even when it holds fewer inliers: a hypothesis can win the
  // count by tilting to collect points of structures touching the plane.
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<Point3> inliers;
    for (const auto& p : pts) {
      if (std::abs(best_n.dot(p) - best_offset) < cfg.inlier_threshold) inliers.push_back(p);
    }
    const auto refined = detail::fit_plane_lsq(inliers);
    if (!refined) break;
    best_n = refined->first;
    best_offset = refined->second;
  }
  // Two more passes in a band scaled to the residual spread (MAD), never wider
  // than the threshold. Drops flat structures sitting just above the table.
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> res;
    for (const auto& p : pts) {
      const double d = std::abs(best_n.dot(p) - best_offset);
      if (d < cfg.inlier_threshold) res.push_back(d);
    }
    if (res.size() < 3) break;
    auto mid = res.begin() + static_cast<std::ptrdiff_t>(res.size() / 2);
    std::nth_element(res.begin(), mid, res.end());
    const double band = std::clamp(3.0 * 1.4826 * *mid, 1e-9, cfg.inlier_threshold);
    std::vector<Point3> inliers;
    for (const auto& p : pts) {
      if (std::abs(best_n.dot(p) - best_offset) < band) inliers.push_back(p);
    }
    const auto refined = detail::fit_plane_lsq(inliers);
    if (!refined) break;
    best_n = refined->first;
    best_offset = refined->second;
  }
  best_count = detail::count_plane_inliers(pts, best_n, best_offset, cfg.inlier_threshold);

  const double ratio = static_cast<double>(best_count) / static_cast<double>(pts.size());
  if (ratio < cfg.min_inlier_ratio) {
    throw NoModelFound("plane fit: best inlier ratio " + std::to_string(ratio) +
                       " below minimum " + std::to_string(cfg.min_inlier_ratio));
  }
  if (best_offset > 0.0) {
    best_n = -best_n;
    best_offset = -best_offset;
  }
  return PlaneModel{best_n, best_offset, best_count};
}

/// Points strictly more than `margin` above the table (camera side), in input order.
inline PointCloud extract_above_plane(const PointCloud& cloud, const PlaneModel& table,
                                      double margin) {
  if (margin < 0.0) throw InvalidConfig("extract_above_plane: margin must be >= 0");
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.timestamp = cloud.timestamp;
  for (const auto& p : cloud.points) {
    if (table.signed_distance(p) > margin) out.points.push_back(p);
  }
  return out;
}

/// RANSAC fit of a cylinder whose axis is the table normal. Hypotheses are
/// circles through three points projected onto the table plane; the winner is
/// refined by a geometric least-squares circle fit on its inliers.
inline CylinderModel fit_cylinder_ransac(const PointCloud& cloud, const PlaneModel& table,
                                         const RansacConfig& cfg) {
  detail::check_ransac_config(cfg);
  if (cloud.size() < 3) throw DegenerateInput("cylinder fit needs at least 3 points");

  const Eigen::Vector3d n = table.normal;
  const auto [u, v] = detail::plane_basis(n);
  std::vector<Eigen::Vector2d> flat(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    flat[i] = Eigen::Vector2d(u.dot(cloud.points[i]), v.dot(cloud.points[i]));
  }

  const auto count_inliers = [&](const detail::Circle& c) {
    std::size_t count = 0;
    for (const auto& q : flat) {
      if (std::abs((q - c.center).norm() - c.radius) < cfg.inlier_threshold) ++count;
    }
    return count;
  };

  std::mt19937_64 rng(cfg.seed);
  std::optional<detail::Circle> best;
  std::size_t best_count = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto [a, b, c] = cloud.size() == 3 ? std::array<std::size_t, 3>{0, 1, 2}
                                             : detail::sample_triple(rng, cloud.size());
    const auto circle = detail::circumcircle(flat[a], flat[b], flat[c]);
    if (!circle || circle->radius > cfg.max_radius) continue;
    const std::size_t count = count_inliers(*circle);
    if (count > best_count) {
      best_count = count;
      best = circle;
    }
  }
  if (!best) throw NoModelFound("cylinder fit: no valid circle hypothesis");

  std::vector<Eigen::Vector2d> inliers;
  for (const auto& q : flat) {
    if (std::abs((q - best->center).norm() - best->radius) < cfg.inlier_threshold) {
      inliers.push_back(q);
    }
  }
  if (auto refined = detail::fit_circle_lsq(inliers);
      refined && refined->radius <= cfg.max_radius) {
    const std::size_t count = count_inliers(*refined);
    if (count >= best_count) {
      best = refined;
      best_count = count;
    }
  }

  const double ratio = static_cast<double>(best_count) / static_cast<double>(cloud.size());
  if (ratio < cfg.min_inlier_ratio) {
    throw NoModelFound("cylinder fit: best inlier ratio " + std::to_string(ratio) +
                       " below minimum " + std::to_string(cfg.min_inlier_ratio));
  }

  double top = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (std::abs((flat[i] - best->center).norm() - best->radius) < cfg.inlier_threshold) {
      top = std::max(top, table.signed_distance(cloud.points[i]));
    }
  }
  if (!(top > 0.0)) throw NoModelFound("cylinder fit: inliers have no height above the table");

  CylinderModel cyl;
  cyl.axis_point = best->center.x() * u + best->center.y() * v + table.offset * n;
  cyl.axis_direction = n;
  cyl.radius = best->radius;
  cyl.height = top;
  cyl.inlier_count = best_count;
  return cyl;
}

/// Indices of the points inside the co-axial search cylinder of radius
/// diameter_scale·radius, from below the cup bottom up to the rim.
///
/// Depth noise displaces a point along its own camera ray, so testing only
/// the noisy position would make selection depend on the noise and bias the
/// mean height. A point is therefore also required to have its ray pierce the
/// median candidate elevation inside the slightly smaller radius
/// (1 − ray_guard)·diameter_scale·radius.
inline std::vector<std::size_t> select_surface_points(const PointCloud& cloud,
                                                      const CylinderModel& cup,
                                                      const PlaneModel& table,
                                                      double diameter_scale,
                                                      double ray_guard = 0.1) {
  if (!(diameter_scale > 0.0 && diameter_scale < 1.0)) {
    throw InvalidConfig("diameter_scale must lie in (0, 1)");
  }
  const double max_r = diameter_scale * cup.radius;
  std::vector<std::size_t> candidates;
  std::vector<double> elevations;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud.points[i];
    const double e = table.signed_distance(p);
    if (e <= cup.height && cup.radial_distance(p) <= max_r) {
      candidates.push_back(i);
      elevations.push_back(e);
    }
  }
  if (candidates.empty() || ray_guard <= 0.0) return candidates;

  const auto mid = elevations.begin() + static_cast<std::ptrdiff_t>(elevations.size() / 2);
  std::nth_element(elevations.begin(), mid, elevations.end());
  const double reference = *mid;
  const double ray_r = (1.0 - ray_guard) * max_r;

  std::vector<std::size_t> selected;
  selected.reserve(candidates.size());
  for (const auto i : candidates) {
    const Point3& p = cloud.points[i];
    const double along = table.normal.dot(p);
    if (std::abs(along) < 1e-12) continue;
    // Ray x = t·p meets the plane n·x = offset + reference.
    const Point3 pierce = p * ((table.offset + reference) / along);
    if (cup.radial_distance(pierce) <= ray_r) selected.push_back(i);
  }
  return selected;
}

/// Incidence angle between the ray origin→point and the surface normal.
inline double incidence_angle(const Point3& point, const Eigen::Vector3d& normal) {
  const double len = point.norm();
  if (!(len > 0.0)) return 0.0;
  const double c = std::clamp(std::abs(normal.dot(point)) / len, 0.0, 1.0);
  return std::acos(c);
}

/// Mean elevation of the surface points inside the reduced-diameter region.
/// Returns nullopt when the region is empty.
inline std::optional<RawHeightMeasurement> try_measure_raw_height(const PointCloud& cloud,
                                                                  const CylinderModel& cup,
                                                                  const PlaneModel& table,
                                                                  double diameter_scale) {
  const auto idx = select_surface_points(cloud, cup, table, diameter_scale);
  if (idx.empty()) return std::nullopt;
  double sum_elev = 0.0;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto i : idx) {
    sum_elev += table.signed_distance(cloud.points[i]);
    centroid += cloud.points[i];
  }
  const double count = static_cast<double>(idx.size());
  centroid /= count;

  RawHeightMeasurement m;
  m.h_r = std::max(0.0, sum_elev / count);
  m.alpha = incidence_angle(centroid, table.normal);
  m.point_count = idx.size();
  m.timestamp = cloud.timestamp;
  return m;
}

inline RawHeightMeasurement measure_raw_height(const PointCloud& cloud, const CylinderModel& cup,
                                               const PlaneModel& table, double diameter_scale) {
  if (auto m = try_measure_raw_height(cloud, cup, table, diameter_scale)) return *m;
  throw NoLiquidVisible("no points inside the reduced-diameter search region");
}

struct SceneConfig {
  RansacConfig plane;
  RansacConfig cylinder;
  double above_table_margin = 0.005;  // meters
  double diameter_scale = 0.8;
};

struct SceneModel {
  PlaneModel table;
  CylinderModel cup;
};

/// Table plane, then the cup cylinder on the points above it.
inline SceneModel detect_scene(const PointCloud& cloud, const SceneConfig& cfg) {
  SceneModel scene;
  scene.table = fit_plane_ransac(cloud, cfg.plane);
  const PointCloud above = extract_above_plane(cloud, scene.table, cfg.above_table_margin);
  scene.cup = fit_cylinder_ransac(above, scene.table, cfg.cylinder);
  return scene;
}

}  // namespace pour
