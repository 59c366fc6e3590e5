#pragma once

// ASCII point-cloud files:
//
//   # optional comment lines anywhere
//   POINTS <N>
//   <x> <y> <z>      (N lines, meters)

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "pour/errors.hpp"
#include "pour/geometry.hpp"

namespace pour {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void parse_fail(std::size_t line_no, const std::string& what) {
  throw ParseError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace detail

inline PointCloud read_cloud(std::istream& in) {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> expected;

  while (std::getline(in, line)) {
    ++line_no;
    const auto s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;

    if (!expected) {
      std::istringstream hdr{std::string(s)};
      std::string keyword;
      long long n = -1;
      std::string rest;
      if (!(hdr >> keyword >> n) || keyword != "POINTS" || n < 0 || (hdr >> rest)) {
        detail::parse_fail(line_no, "expected header 'POINTS <N>', got '" + std::string(s) + "'");
      }
      expected = static_cast<std::size_t>(n);
      cloud.points.reserve(*expected);
      continue;
    }

    if (cloud.points.size() == *expected) {
      detail::parse_fail(line_no, "more points than declared (" + std::to_string(*expected) + ")");
    }
    std::istringstream row{std::string(s)};
    double x, y, z;
    std::string rest;
    if (!(row >> x >> y >> z) || (row >> rest)) {
      detail::parse_fail(line_no, "expected '<x> <y> <z>', got '" + std::string(s) + "'");
    }
    const Point3 p(x, y, z);
    if (!p.allFinite()) detail::parse_fail(line_no, "non-finite coordinate");
    cloud.points.push_back(p);
  }

  if (!expected) detail::parse_fail(line_no, "missing 'POINTS <N>' header");
  if (cloud.points.size() != *expected) {
    detail::parse_fail(line_no, "declared " + std::to_string(*expected) + " points, found " +
                                    std::to_string(cloud.points.size()));
  }
  return cloud;
}

inline PointCloud read_cloud_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open point-cloud file '" + path + "'");
  return read_cloud(in);
}

/// Coordinates are written with 17 significant digits so a read-back is exact.
inline void write_cloud(std::ostream& out, const PointCloud& cloud) {
  out << "POINTS " << cloud.size() << '\n';
  char buf[96];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
}

inline void write_cloud_file(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write point-cloud file '" + path + "'");
  write_cloud(out, cloud);
}

}  // namespace pour
