#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "treereg/point_cloud.hpp"

namespace treereg {

/// Reads a whitespace-separated ASCII file, one point per line. Lines may
/// carry a trailing '#' comment; fields beyond x y z become channels. The
/// channel count is fixed by the first data line.
inline PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);

  PointCloud cloud;
  bool channel_dim_set = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<double> vals;
    double v;
    while (fields >> v) vals.push_back(v);
    if (vals.empty()) continue;  // blank or comment-only line
    if (vals.size() < 3) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected at least 3 numeric fields");
    }
    for (double x : vals) {
      if (!std::isfinite(x)) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": non-finite value");
      }
    }
    if (!channel_dim_set) {
      cloud.channel_dim = vals.size() - 3;
      channel_dim_set = true;
    } else if (vals.size() - 3 != cloud.channel_dim) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": inconsistent field count");
    }
    cloud.points.emplace_back(vals[0], vals[1], vals[2]);
    for (std::size_t c = 3; c < vals.size(); ++c) cloud.channels.push_back(vals[c]);
  }
  if (cloud.empty()) throw std::runtime_error(path + ": empty cloud");
  return cloud;
}

inline void write_xyz(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    for (std::size_t c = 0; c < cloud.channel_dim; ++c) {
      out << ' ' << cloud.channels[i * cloud.channel_dim + c];
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Reads a LiDAR scan stored as consecutive little-endian float32 quadruples
/// (x, y, z, reflectance). Reflectance becomes a 1-dim channel.
inline PointCloud read_kitti_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff bytes = in.tellg();
  in.seekg(0, std::ios::beg);
  if (bytes % 16 != 0) {
    throw std::runtime_error(path + ": size " + std::to_string(bytes) +
                             " is not a multiple of 16 bytes");
  }
  const std::size_t n = static_cast<std::size_t>(bytes) / 16;
  if (n == 0) throw std::runtime_error(path + ": empty cloud");

  std::vector<float> raw(n * 4);
  in.read(reinterpret_cast<char*>(raw.data()), bytes);
  if (!in) throw std::runtime_error(path + ": short read");

  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.channel_dim = 1;
  cloud.channels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float x = raw[i * 4], y = raw[i * 4 + 1], z = raw[i * 4 + 2],
                r = raw[i * 4 + 3];
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
        !std::isfinite(r)) {
      throw std::runtime_error(path + ": non-finite value in record " +
                               std::to_string(i));
    }
    cloud.points.emplace_back(x, y, z);
    cloud.channels.push_back(r);
  }
  return cloud;
}

}  // namespace treereg
