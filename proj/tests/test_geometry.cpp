#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pour/cloud_io.hpp"
#include "pour/geometry.hpp"
#include "support.hpp"

using namespace pour;
namespace ts = testing_support;

namespace {

double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::acos(std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0));
}

}  // namespace

TEST(PlaneFit, NoisyPlaneWithOutliers) {
  std::mt19937_64 rng(3);
  PointCloud c = ts::plane_patch(rng, 900, 0.15, 0.001);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int i = 0; i < 100; ++i) c.points.push_back({u(rng), u(rng), 0.5 + u(rng)});

  const PlaneModel p = fit_plane_ransac(c, RansacConfig{});
  EXPECT_LT(angle_between(p.normal, {0, 0, 1}), 1.0 * std::numbers::pi / 180.0);
  EXPECT_NEAR(std::abs(p.offset), 0.75, 0.002);
  EXPECT_GE(p.inlier_count, 850u);
}

TEST(PlaneFit, ThreeExactPoints) {
  PointCloud c;
  c.points = {{0.0, 0.0, 1.0}, {1.0, 0.0, 1.0}, {0.0, 1.0, 1.0}};
  const PlaneModel p = fit_plane_ransac(c, RansacConfig{});
  EXPECT_EQ(p.inlier_count, 3u);
  for (const auto& q : c.points) EXPECT_NEAR(p.signed_distance(q), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(p.normal.z()), 1.0, 1e-12);
}

TEST(PlaneFit, NormalFacesCamera) {
  std::mt19937_64 rng(5);
  const PlaneModel p = fit_plane_ransac(ts::plane_patch(rng, 300, 0.1, 0.0005), RansacConfig{});
  EXPECT_LE(p.offset, 0.0);
  EXPECT_GT(p.signed_distance(Point3::Zero()), 0.0);
}

TEST(PlaneFit, RandomCubeHasNoDominantPlane) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud c;
  for (int i = 0; i < 100; ++i) c.points.push_back({u(rng), u(rng), u(rng)});
  RansacConfig cfg;
  cfg.min_inlier_ratio = 0.8;

  // Brute force over every triple: no plane through three points holds 80%.
  std::size_t best = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      for (std::size_t k = j + 1; k < c.size(); k += 7) {
        const Eigen::Vector3d n =
            (c.points[j] - c.points[i]).cross(c.points[k] - c.points[i]).normalized();
        std::size_t count = 0;
        for (const auto& p : c.points) count += std::abs(n.dot(p - c.points[i])) <= 0.003;
        best = std::max(best, count);
      }
    }
  }
  ASSERT_LT(best, 80u);
  EXPECT_THROW(fit_plane_ransac(c, cfg), NoModelFound);
}

TEST(PlaneFit, DegenerateInputs) {
  PointCloud two;
  two.points = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(fit_plane_ransac(two, RansacConfig{}), DegenerateInput);
  PointCloud line;
  for (int i = 0; i < 20; ++i) line.points.push_back({0.01 * i, 0.02 * i, 0.0});
  EXPECT_THROW(fit_plane_ransac(line, RansacConfig{}), DegenerateInput);
}

TEST(PlaneFit, DeterministicPerSeed) {
  std::mt19937_64 rng(8);
  const PointCloud c = ts::plane_patch(rng, 500, 0.1, 0.002);
  RansacConfig cfg;
  cfg.seed = 42;
  const PlaneModel a = fit_plane_ransac(c, cfg);
  const PlaneModel b = fit_plane_ransac(c, cfg);
  EXPECT_EQ(a.normal, b.normal);
  EXPECT_EQ(a.offset, b.offset);
  EXPECT_EQ(a.inlier_count, b.inlier_count);
}

TEST(PlaneFit, RefitOnOwnInliersKeepsInliers) {
  std::mt19937_64 rng(21);
  PointCloud c = ts::plane_patch(rng, 600, 0.12, 0.001);
  ts::add_cylinder_shell(c, rng, 0.0, 0.0, 0.04, 0.1, 300, 0.001);
  const PlaneModel p = fit_plane_ransac(c, RansacConfig{});
  PointCloud inliers;
  for (const auto& q : c.points) {
    if (std::abs(p.signed_distance(q)) <= 0.003) inliers.points.push_back(q);
  }
  const PlaneModel again = fit_plane_ransac(inliers, RansacConfig{});
  EXPECT_GE(again.inlier_count + 5, p.inlier_count);
}

TEST(AbovePlane, StrictBoundaryAndEmpty) {
  const PlaneModel t = ts::exact_table();
  PointCloud c;
  c.points = {ts::from_table(0.0, 0.0, 0.0), ts::from_table(0.0, 0.0, 0.01)};
  const PointCloud above = extract_above_plane(c, t, 0.0);
  ASSERT_EQ(above.size(), 1u);
  EXPECT_NEAR(t.signed_distance(above.points[0]), 0.01, 1e-12);

  PointCloud below;
  below.points = {ts::from_table(0.0, 0.0, -0.01), ts::from_table(0.1, 0.0, -0.02)};
  EXPECT_TRUE(extract_above_plane(below, t, 0.0).empty());
}

TEST(AbovePlane, CountsMatchConstructionAndIsIdempotent) {
  std::mt19937_64 rng(4);
  PointCloud c = ts::plane_patch(rng, 2000, 0.12, 0.0005);
  const std::size_t table_points = c.size();
  ts::add_cylinder_shell(c, rng, 0.0, 0.0, 0.0375, 0.1, 1200, 0.0);
  std::size_t cup_points = 0;
  for (std::size_t i = table_points; i < c.size(); ++i) {
    cup_points += ts::exact_table().signed_distance(c.points[i]) > 0.005;
  }
  const PlaneModel t = fit_plane_ransac(c, RansacConfig{});
  const PointCloud once = extract_above_plane(c, t, 0.005);
  EXPECT_NEAR(static_cast<double>(once.size()), static_cast<double>(cup_points), 0.01 * cup_points);
  const PointCloud twice = extract_above_plane(once, t, 0.005);
  EXPECT_EQ(once.points, twice.points);
}

TEST(CylinderFit, NoisyBlueCup) {
  std::mt19937_64 rng(9);
  PointCloud c;
  ts::add_cylinder_shell(c, rng, 0.01, -0.02, 0.0375, 0.1, 1500, 0.001);
  const CylinderModel cyl = fit_cylinder_ransac(c, ts::exact_table(), RansacConfig{});
  EXPECT_NEAR(cyl.radius, 0.0375, 0.0015);
  const Point3 axis_at_table = ts::from_table(0.01, -0.02, 0.0);
  EXPECT_NEAR(cyl.radial_distance(axis_at_table), 0.0, 0.002);
}

TEST(CylinderFit, NoiselessHalfShell) {
  std::mt19937_64 rng(10);
  PointCloud c;
  ts::add_cylinder_shell(c, rng, 0.0, 0.0, 0.03, 0.1, 800, 0.0, 0.0, std::numbers::pi);
  const CylinderModel cyl = fit_cylinder_ransac(c, ts::exact_table(), RansacConfig{});
  EXPECT_NEAR(cyl.radius, 0.03, 1e-4);
  EXPECT_NEAR(cyl.height, 0.1, 0.002);
}

TEST(CylinderFit, PlaneOnlyHasNoCylinder) {
  std::mt19937_64 rng(12);
  PointCloud c;
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  // A vertical wall: projects onto a line, which no bounded circle fits.
  for (int i = 0; i < 500; ++i) c.points.push_back(ts::from_table(u(rng), 0.05, 0.05 + u(rng) / 2));
  EXPECT_THROW(fit_cylinder_ransac(c, ts::exact_table(), RansacConfig{}), NoModelFound);
}

TEST(RawHeight, MilkDiskRepeatability) {
  const auto table = ts::exact_table();
  const auto cup = ts::exact_cup(0.0, 0.0, 0.0375, 0.1);
  double sum = 0.0, sum2 = 0.0;
  const int frames = 200;
  for (int f = 0; f < frames; ++f) {
    std::mt19937_64 rng(1000 + f);
    PointCloud c;
    ts::add_disk(c, rng, 0.0, 0.0, 0.0375, 0.060, 250, 0.002);
    const auto m = measure_raw_height(c, cup, table, 0.8);
    sum += m.h_r;
    sum2 += m.h_r * m.h_r;
  }
  const double mean = sum / frames;
  const double sd = std::sqrt(sum2 / frames - mean * mean);
  EXPECT_NEAR(mean, 0.060, 0.0001);
  // 2 mm point noise over ~160 selected points: 0.16 mm per frame.
  EXPECT_GT(sd, 0.00008);
  EXPECT_LT(sd, 0.0003);
}

TEST(RawHeight, EmptyRegionThrows) {
  std::mt19937_64 rng(1);
  PointCloud c;
  ts::add_cylinder_shell(c, rng, 0.0, 0.0, 0.0375, 0.1, 300, 0.0);
  EXPECT_THROW(measure_raw_height(c, ts::exact_cup(0, 0, 0.0375, 0.1), ts::exact_table(), 0.8),
               NoLiquidVisible);
}

TEST(RawHeight, NormalIncidenceAboveCenter) {
  // Camera at the origin looks straight down the cup axis.
  std::mt19937_64 rng(2);
  PointCloud c;
  ts::add_disk(c, rng, 0.0, 0.0, 0.0375, 0.04, 400, 0.0);
  const auto m = measure_raw_height(c, ts::exact_cup(0, 0, 0.0375, 0.1), ts::exact_table(), 0.8);
  EXPECT_NEAR(m.alpha, 0.0, 0.01);
  EXPECT_NEAR(m.h_r, 0.04, 1e-12);
}

TEST(RawHeight, SelectionStaysInsideReducedDiameter) {
  std::mt19937_64 rng(13);
  PointCloud c;
  ts::add_disk(c, rng, 0.05, 0.02, 0.0375, 0.03, 600, 0.003);
  ts::add_cylinder_shell(c, rng, 0.05, 0.02, 0.0375, 0.1, 600, 0.001);
  const auto cup = ts::exact_cup(0.05, 0.02, 0.0375, 0.1);
  for (double scale : {0.3, 0.5, 0.8, 0.95}) {
    const auto idx = select_surface_points(c, cup, ts::exact_table(), scale);
    ASSERT_FALSE(idx.empty());
    for (auto i : idx) EXPECT_LE(cup.radial_distance(c.points[i]), scale * 0.0375 + 1e-12);
  }
  EXPECT_THROW(select_surface_points(c, cup, ts::exact_table(), 1.0), InvalidConfig);
}

TEST(RawHeight, InvariantUnderRotationAboutTableNormal) {
  std::mt19937_64 rng(14);
  PointCloud c;
  ts::add_disk(c, rng, 0.0, 0.0, 0.0375, 0.05, 500, 0.002);
  const auto table = ts::exact_table();
  const auto cup = ts::exact_cup(0.0, 0.0, 0.0375, 0.1);
  const double base = measure_raw_height(c, cup, table, 0.8).h_r;

  // Rotate about the cup axis (parallel to the table normal).
  const Eigen::AngleAxisd rot(0.7, Eigen::Vector3d::UnitZ());
  const Point3 pivot = cup.axis_point;
  PointCloud turned;
  for (const auto& p : c.points) turned.points.push_back(pivot + rot * (p - pivot));
  EXPECT_NEAR(measure_raw_height(turned, cup, table, 0.8).h_r, base, 1e-12);
}

TEST(CloudIo, RoundTripIsExact) {
  std::mt19937_64 rng(15);
  const PointCloud c = ts::plane_patch(rng, 50, 0.1, 0.003);
  std::stringstream ss;
  write_cloud(ss, c);
  const PointCloud back = read_cloud(ss);
  EXPECT_EQ(back.points, c.points);
}

TEST(CloudIo, CommentsAreSkipped) {
  std::istringstream in("# scene\nPOINTS 2\n0 0 1\n# mid\n1 2 3\n");
  const PointCloud c = read_cloud(in);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.points[1], Point3(1, 2, 3));
}

TEST(CloudIo, ErrorsNameTheLine) {
  const auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_cloud(in);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("POINT 3\n").rfind("line 1:", 0), 0u);
  EXPECT_EQ(message("# c\nPOINTS 2\n0 0 0\n0 0\n").rfind("line 4:", 0), 0u);
  EXPECT_NE(message("POINTS 3\n0 0 0\n").find("declared 3"), std::string::npos);
  EXPECT_NE(message("POINTS 1\n0 0 0\n1 1 1\n").find("more points"), std::string::npos);
  EXPECT_NE(message("").find("missing"), std::string::npos);
}
