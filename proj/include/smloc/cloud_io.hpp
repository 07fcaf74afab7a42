#pragma once

// ASCII XYZ and PLY point cloud files.
//
// XYZ: one "x y z" triple per line; blank lines and lines starting with '#'
// are skipped.
// PLY: "format ascii 1.0" with a vertex element carrying x, y, z and
// optionally nx, ny, nz. Other vertex properties are read and ignored. The
// writer records the sensor origin as "comment sensor_origin x y z".

#include "smloc/pointcloud.hpp"
#include "smloc/textio.hpp"

#include <filesystem>
#include <sstream>
#include <string>

namespace smloc {

inline PointCloud read_xyz(const std::string& path) {
  auto in = open_input(path);
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto f = split_ws(t);
    if (f.size() != 3) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 3 values");
    }
    cloud.points.emplace_back(parse_double(f[0]), parse_double(f[1]), parse_double(f[2]));
  }
  return cloud;
}

inline void write_xyz(const std::string& path, const PointCloud& cloud) {
  auto out = open_output(path);
  for (const auto& p : cloud.points) {
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z())
        << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline PointCloud read_ply(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "ply") {
    throw std::runtime_error(path + ": missing ply magic");
  }
  PointCloud cloud;
  std::size_t n_vertices = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    const auto f = split_ws(t);
    if (f.empty()) continue;
    if (f[0] == "end_header") break;
    if (f[0] == "format") {
      if (f.size() < 2 || f[1] != "ascii") throw std::runtime_error(path + ": only ascii PLY supported");
    } else if (f[0] == "comment") {
      if (f.size() == 5 && f[1] == "sensor_origin") {
        cloud.sensor_origin = {parse_double(f[2]), parse_double(f[3]), parse_double(f[4])};
      }
    } else if (f[0] == "element") {
      if (f.size() != 3) throw std::runtime_error(path + ": bad element line");
      in_vertex = f[1] == "vertex";
      if (in_vertex) {
        n_vertices = static_cast<std::size_t>(parse_int(f[2]));
        seen_vertex = true;
      } else if (!seen_vertex) {
        throw std::runtime_error(path + ": vertex element must come first");
      }
    } else if (f[0] == "property" && in_vertex) {
      if (f.size() != 3) throw std::runtime_error(path + ": unsupported vertex property");
      props.emplace_back(f[2]);
    }
  }
  auto find = [&](const char* name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i) {
      if (props[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int inx = find("nx"), iny = find("ny"), inz = find("nz");
  if (ix < 0 || iy < 0 || iz < 0) throw std::runtime_error(path + ": missing x/y/z");
  const bool normals = inx >= 0 && iny >= 0 && inz >= 0;

  cloud.points.reserve(n_vertices);
  for (std::size_t v = 0; v < n_vertices; ++v) {
    if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated vertex list");
    const auto f = split_ws(trim(line));
    if (f.size() != props.size()) throw std::runtime_error(path + ": bad vertex row");
    cloud.points.emplace_back(parse_double(f[ix]), parse_double(f[iy]), parse_double(f[iz]));
    if (normals) {
      const Vector3 n{parse_double(f[inx]), parse_double(f[iny]), parse_double(f[inz])};
      cloud.normals.push_back(n);
      cloud.normal_valid.push_back(n.squaredNorm() > 0.0 ? 1 : 0);
    }
  }
  return cloud;
}

inline void write_ply(const std::string& path, const PointCloud& cloud) {
  auto out = open_output(path);
  const bool normals = cloud.has_normals();
  out << "ply\nformat ascii 1.0\n";
  out << "comment sensor_origin " << format_double(cloud.sensor_origin.x()) << ' '
      << format_double(cloud.sensor_origin.y()) << ' ' << format_double(cloud.sensor_origin.z())
      << '\n';
  out << "element vertex " << cloud.size() << '\n';
  out << "property double x\nproperty double y\nproperty double z\n";
  if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z());
    if (normals) {
      const auto& n = cloud.normals[i];
      out << ' ' << format_double(n.x()) << ' ' << format_double(n.y()) << ' '
          << format_double(n.z());
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Dispatches on extension: ".ply" or anything else as XYZ.
inline PointCloud read_cloud(const std::string& path) {
  return std::filesystem::path(path).extension() == ".ply" ? read_ply(path) : read_xyz(path);
}

}  // namespace smloc
