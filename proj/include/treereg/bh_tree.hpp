#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <memory>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "treereg/point_cloud.hpp"

namespace treereg {
namespace morton {

/// Spreads the low 10 bits of v so bit k lands at position 3k.
inline std::uint64_t spread3(std::uint64_t v) {
  v &= 0x3ffu;
  v = (v | (v << 16)) & 0x030000ffu;
  v = (v | (v << 8)) & 0x0300f00fu;
  v = (v | (v << 4)) & 0x030c30c3u;
  v = (v | (v << 2)) & 0x09249249u;
  return v;
}

/// Inverse of spread3: collects every third bit back into the low 10.
inline std::uint32_t compact3(std::uint64_t v) {
  v &= 0x09249249u;
  v = (v | (v >> 2)) & 0x030c30c3u;
  v = (v | (v >> 4)) & 0x0300f00fu;
  v = (v | (v >> 8)) & 0x030000ffu;
  v = (v | (v >> 16)) & 0x3ffu;
  return static_cast<std::uint32_t>(v);
}

/// Z-curve code with x in the lowest bit of each octant digit.
inline std::uint64_t encode(std::uint32_t ix, std::uint32_t iy,
                            std::uint32_t iz) {
  return spread3(ix) | (spread3(iy) << 1) | (spread3(iz) << 2);
}

inline void decode(std::uint64_t m, std::uint32_t& ix, std::uint32_t& iy,
                   std::uint32_t& iz) {
  ix = compact3(m);
  iy = compact3(m >> 1);
  iz = compact3(m >> 2);
}

/// Grid coordinate of c in [-1,1] at the given depth. c + 1 rounds once and
/// all remaining factors are powers of two, so coordinates at different
/// depths are exact bit-shifts of each other. A coordinate exactly on a cell
/// boundary floors into the upper cell.
inline std::uint32_t grid_coord(double c, int depth) {
  const double cells = static_cast<double>(std::int64_t{1} << depth);
  auto i = static_cast<std::int64_t>(std::floor((c + 1.0) * 0.5 * cells));
  i = std::clamp(i, std::int64_t{0}, (std::int64_t{1} << depth) - 1);
  return static_cast<std::uint32_t>(i);
}

}  // namespace morton

/// Number of labels strictly above depth d on the global Z-curve:
/// (8^d - 1) / 7. A node at depth d with per-depth Morton code m carries
/// global label m + depth_offset(d).
inline std::int64_t depth_offset(int depth) {
  return ((std::int64_t{1} << (3 * depth)) - 1) / 7;
}

inline std::int64_t label_from_morton(int depth, std::uint64_t m) {
  return depth_offset(depth) + static_cast<std::int64_t>(m);
}

/// Children of global label i along the Z-curve: {8i+1, ..., 8i+8}.
inline std::array<std::int64_t, 8> child_labels(std::int64_t parent) {
  std::array<std::int64_t, 8> out;
  for (int k = 0; k < 8; ++k) out[k] = 8 * parent + 1 + k;
  return out;
}

inline std::int64_t parent_label(std::int64_t child) {
  if (child <= 0) throw std::invalid_argument("root has no parent");
  return (child - 1) / 8;
}

enum class NodeKind : std::uint8_t { null, internal, leaf };

/// One tree depth, stored structure-of-arrays in ascending Morton order.
/// Cells containing a single point are carried down to max_depth, so every
/// depth holds exactly the cells that enclose at least one input point.
struct DepthLevel {
  std::vector<std::int64_t> labels;    // global Z-curve labels
  std::vector<std::uint64_t> mortons;  // per-depth Morton codes
  std::vector<Eigen::Vector3d> com;
  std::vector<double> inv_density;  // normalized per depth; sums to 1
  std::vector<std::int64_t> count;
  std::vector<std::int32_t> parent;                // index at depth-1, -1 at root
  std::vector<std::array<std::int32_t, 8>> children;  // index at depth+1, -1 empty
  std::vector<std::int64_t> point_begin;  // range into BHTree::sorted_point
  std::vector<std::int64_t> point_end;
  double half_length = 1.0;  // cube half-length r, shared across the depth

  std::size_t size() const { return mortons.size(); }
};

/// Read-only view of a single node assembled from the per-depth arrays.
struct BHNodeView {
  std::int64_t label;
  NodeKind kind;
  Eigen::Vector3d com;
  double inv_density;
  std::int64_t count;
  Eigen::Vector3d cell_center;
  double cell_half_length;
  std::int32_t parent;
  const std::array<std::int32_t, 8>* children;
};

inline Eigen::Vector3d cell_center_of(std::uint64_t m, int depth) {
  std::uint32_t ix, iy, iz;
  morton::decode(m, ix, iy, iz);
  const double h = 1.0 / static_cast<double>(std::int64_t{1} << depth);
  return {-1.0 + (2.0 * ix + 1.0) * h, -1.0 + (2.0 * iy + 1.0) * h,
          -1.0 + (2.0 * iz + 1.0) * h};
}

class BHTree {
 public:
  int max_depth = 0;
  std::vector<DepthLevel> levels;          // levels[d] for d = 0..max_depth
  std::vector<std::int64_t> sorted_point;  // point indices, deepest Z order
  const PointCloud* source_cloud = nullptr;

  /// Index of the node with this global label at this depth, or -1.
  std::int32_t lookup(int depth, std::int64_t label) const {
    if (depth < 0 || depth > max_depth) return -1;
    const std::int64_t m = label - depth_offset(depth);
    if (m < 0 || m >= (std::int64_t{1} << (3 * depth))) return -1;
    if (depth < static_cast<int>(dense_lookup_.size()) &&
        !dense_lookup_[depth].empty()) {
      return dense_lookup_[depth][static_cast<std::size_t>(m)];
    }
    const auto& map = hash_lookup_[depth];
    const auto it = map.find(static_cast<std::uint64_t>(m));
    return it == map.end() ? -1 : it->second;
  }

  NodeKind kind(int depth, std::int32_t index) const {
    return (levels[depth].count[index] == 1 || depth == max_depth)
               ? NodeKind::leaf
               : NodeKind::internal;
  }

  BHNodeView node(int depth, std::int32_t index) const {
    const DepthLevel& lvl = levels[depth];
    return {lvl.labels[index],
            kind(depth, index),
            lvl.com[index],
            lvl.inv_density[index],
            lvl.count[index],
            cell_center_of(lvl.mortons[index], depth),
            lvl.half_length,
            lvl.parent[index],
            &lvl.children[index]};
  }

  /// 26-neighborhood table for a depth, built on first use. Slot order is
  /// lexicographic over offsets (dz, dy, dx) in {-1,0,1}^3 minus the origin;
  /// -1 marks an empty or out-of-bounds cell. Slot s mirrors to slot 25-s.
  const std::vector<std::array<std::int32_t, 26>>& neighbor_table(
      int depth) const {
    if (depth < 0 || depth > max_depth) {
      throw std::out_of_range("neighbor_table: depth out of range");
    }
    std::scoped_lock lock(cache_->mu);
    auto& table = cache_->per_depth[depth];
    if (table.empty() && levels[depth].size() > 0) {
      build_neighbor_table(depth, table);
    }
    return table;
  }

  // Internal wiring below; build_tree is the only writer.
  void finalize_lookup() {
    dense_lookup_.assign(levels.size(), {});
    hash_lookup_.assign(levels.size(), {});
    for (int d = 0; d <= max_depth; ++d) {
      const auto& lvl = levels[d];
      if (3 * d <= 21) {
        dense_lookup_[d].assign(std::size_t{1} << (3 * d), -1);
        for (std::size_t i = 0; i < lvl.size(); ++i) {
          dense_lookup_[d][lvl.mortons[i]] = static_cast<std::int32_t>(i);
        }
      } else {
        auto& map = hash_lookup_[d];
        map.reserve(lvl.size());
        for (std::size_t i = 0; i < lvl.size(); ++i) {
          map.emplace(lvl.mortons[i], static_cast<std::int32_t>(i));
        }
      }
    }
    cache_ = std::make_unique<NeighborCache>();
    cache_->per_depth.resize(levels.size());
  }

 private:
  struct NeighborCache {
    std::mutex mu;
    std::vector<std::vector<std::array<std::int32_t, 26>>> per_depth;
  };

  void build_neighbor_table(
      int depth, std::vector<std::array<std::int32_t, 26>>& table) const {
    const DepthLevel& lvl = levels[depth];
    const std::int64_t side = std::int64_t{1} << depth;
    table.resize(lvl.size());
    for (std::size_t i = 0; i < lvl.size(); ++i) {
      std::uint32_t ix, iy, iz;
      morton::decode(lvl.mortons[i], ix, iy, iz);
      int s = 0;
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            const std::int64_t nx = static_cast<std::int64_t>(ix) + dx;
            const std::int64_t ny = static_cast<std::int64_t>(iy) + dy;
            const std::int64_t nz = static_cast<std::int64_t>(iz) + dz;
            std::int32_t idx = -1;
            if (nx >= 0 && nx < side && ny >= 0 && ny < side && nz >= 0 &&
                nz < side) {
              const std::uint64_t nm = morton::encode(
                  static_cast<std::uint32_t>(nx), static_cast<std::uint32_t>(ny),
                  static_cast<std::uint32_t>(nz));
              idx = lookup(depth, label_from_morton(depth, nm));
            }
            table[i][s++] = idx;
          }
        }
      }
    }
  }

  std::vector<std::vector<std::int32_t>> dense_lookup_;
  std::vector<std::unordered_map<std::uint64_t, std::int32_t>> hash_lookup_;
  mutable std::unique_ptr<NeighborCache> cache_;
};

/// Builds the tree over a cloud normalized to [-1,1]^3. Single-threaded and
/// deterministic: points are keyed by their deepest-level Morton code, sorted
/// once, and every coarser depth is a prefix grouping of the depth below.
inline BHTree build_tree(const PointCloud& cloud, int max_depth) {
  if (max_depth < 1 || max_depth > 10) {
    throw std::invalid_argument("max_depth must be in [1, 10]");
  }
  cloud.validate();
  for (const auto& p : cloud.points) {
    if (p.cwiseAbs().maxCoeff() > 1.0) {
      throw std::invalid_argument("cloud outside [-1,1]^3; normalize first");
    }
  }

  const std::size_t n = cloud.size();
  if (n >= (std::size_t{1} << 32)) {
    throw std::invalid_argument("cloud too large");
  }

  // Key = deepest Morton code in the high bits, point index in the low 32,
  // so one sort yields both the spatial grouping and a stable point order.
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = cloud.points[i];
    const std::uint64_t m = morton::encode(morton::grid_coord(p.x(), max_depth),
                                           morton::grid_coord(p.y(), max_depth),
                                           morton::grid_coord(p.z(), max_depth));
    keys[i] = (m << 32) | static_cast<std::uint64_t>(i);
  }
  std::sort(keys.begin(), keys.end());

  BHTree tree;
  tree.max_depth = max_depth;
  tree.source_cloud = &cloud;
  tree.levels.resize(max_depth + 1);
  tree.sorted_point.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    tree.sorted_point[i] = static_cast<std::int64_t>(keys[i] & 0xffffffffu);
  }

  // Deepest level: group runs of equal Morton codes. Points inside a cell
  // are ordered by coordinates, not input position, so the whole structure
  // is bit-identical under any permutation of the input.
  {
    DepthLevel& lvl = tree.levels[max_depth];
    lvl.half_length = 1.0 / static_cast<double>(std::int64_t{1} << max_depth);
    auto coord_less = [&cloud](std::int64_t a, std::int64_t b) {
      const auto& pa = cloud.points[a];
      const auto& pb = cloud.points[b];
      if (pa.x() != pb.x()) return pa.x() < pb.x();
      if (pa.y() != pb.y()) return pa.y() < pb.y();
      return pa.z() < pb.z();
    };
    std::size_t begin = 0;
    while (begin < n) {
      const std::uint64_t m = keys[begin] >> 32;
      std::size_t end = begin + 1;
      while (end < n && (keys[end] >> 32) == m) ++end;
      std::sort(tree.sorted_point.begin() + begin,
                tree.sorted_point.begin() + end, coord_less);
      Eigen::Vector3d sum = cloud.points[tree.sorted_point[begin]];
      for (std::size_t k = begin + 1; k < end; ++k) {
        sum += cloud.points[tree.sorted_point[k]];
      }
      lvl.mortons.push_back(m);
      lvl.count.push_back(static_cast<std::int64_t>(end - begin));
      lvl.com.push_back(sum / static_cast<double>(end - begin));
      lvl.point_begin.push_back(static_cast<std::int64_t>(begin));
      lvl.point_end.push_back(static_cast<std::int64_t>(end));
      begin = end;
    }
    lvl.children.assign(lvl.size(), {-1, -1, -1, -1, -1, -1, -1, -1});
    lvl.parent.assign(lvl.size(), -1);
  }

  // Coarser levels: group children by Morton prefix and aggregate.
  for (int d = max_depth - 1; d >= 0; --d) {
    DepthLevel& lvl = tree.levels[d];
    DepthLevel& fine = tree.levels[d + 1];
    lvl.half_length = 1.0 / static_cast<double>(std::int64_t{1} << d);
    const std::size_t nf = fine.size();
    std::size_t begin = 0;
    while (begin < nf) {
      const std::uint64_t m = fine.mortons[begin] >> 3;
      std::size_t end = begin + 1;
      while (end < nf && (fine.mortons[end] >> 3) == m) ++end;

      const auto index = static_cast<std::int32_t>(lvl.size());
      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      std::int64_t cnt = 0;
      std::array<std::int32_t, 8> kids{-1, -1, -1, -1, -1, -1, -1, -1};
      for (std::size_t c = begin; c < end; ++c) {
        sum += fine.com[c] * static_cast<double>(fine.count[c]);
        cnt += fine.count[c];
        kids[fine.mortons[c] & 7] = static_cast<std::int32_t>(c);
        fine.parent[c] = index;
      }
      lvl.mortons.push_back(m);
      lvl.count.push_back(cnt);
      lvl.com.push_back(sum / static_cast<double>(cnt));
      lvl.children.push_back(kids);
      lvl.point_begin.push_back(fine.point_begin[begin]);
      lvl.point_end.push_back(fine.point_end[end - 1]);
      begin = end;
    }
    lvl.parent.assign(lvl.size(), -1);
  }

  // Labels and per-depth normalized inverse-density weights. The raw weight
  // 1/count is proportional to the inverse node mass; Kahan-compensated
  // totals keep the per-depth sum at 1 well below the 1e-12 contract.
  for (int d = 0; d <= max_depth; ++d) {
    DepthLevel& lvl = tree.levels[d];
    const std::int64_t offset = depth_offset(d);
    lvl.labels.resize(lvl.size());
    lvl.inv_density.resize(lvl.size());
    double sum = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < lvl.size(); ++i) {
      lvl.labels[i] = offset + static_cast<std::int64_t>(lvl.mortons[i]);
      const double raw = 1.0 / static_cast<double>(lvl.count[i]);
      const double y = raw - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
      lvl.inv_density[i] = raw;
    }
    for (std::size_t i = 0; i < lvl.size(); ++i) lvl.inv_density[i] /= sum;
  }

  tree.finalize_lookup();
  return tree;
}

/// The 26 same-depth neighbor slots of a non-empty node, addressed by label.
inline std::array<std::int32_t, 26> neighbor_indices(const BHTree& tree,
                                                     int depth,
                                                     std::int64_t label) {
  const std::int32_t index = tree.lookup(depth, label);
  if (index < 0) {
    throw std::invalid_argument("neighbor_indices: querying an empty node");
  }
  return tree.neighbor_table(depth)[static_cast<std::size_t>(index)];
}

/// Depth-2 nodes scattered into the dense 4x4x4 grid, indexed by Morton
/// code. mass is the enclosed point fraction; empty cells hold zeros.
struct VoxelGrid {
  std::array<std::int32_t, 64> node_index;
  std::array<double, 64> mass;
  std::array<Eigen::Vector3d, 64> com;
  std::array<bool, 64> occupied;
};

inline VoxelGrid tree_to_voxel(const BHTree& tree) {
  if (tree.max_depth < 2) {
    throw std::invalid_argument("tree_to_voxel requires depth >= 2");
  }
  VoxelGrid grid;
  grid.node_index.fill(-1);
  grid.mass.fill(0.0);
  grid.com.fill(Eigen::Vector3d::Zero());
  grid.occupied.fill(false);

  const DepthLevel& lvl = tree.levels[2];
  const auto total = static_cast<double>(tree.levels[0].count[0]);
  for (std::size_t i = 0; i < lvl.size(); ++i) {
    const auto cell = static_cast<std::size_t>(lvl.mortons[i]);
    grid.node_index[cell] = static_cast<std::int32_t>(i);
    grid.mass[cell] = static_cast<double>(lvl.count[i]) / total;
    grid.com[cell] = lvl.com[i];
    grid.occupied[cell] = true;
  }
  return grid;
}

/// One line per node: depth, label, count, com xyz, inv_density. Depth-major,
/// Morton order within a depth; stable for golden-file comparison.
inline void dump_tree(const BHTree& tree, std::ostream& out) {
  out << std::setprecision(17);
  for (int d = 0; d <= tree.max_depth; ++d) {
    const DepthLevel& lvl = tree.levels[d];
    for (std::size_t i = 0; i < lvl.size(); ++i) {
      out << d << ' ' << lvl.labels[i] << ' ' << lvl.count[i] << ' '
          << lvl.com[i].x() << ' ' << lvl.com[i].y() << ' ' << lvl.com[i].z()
          << ' ' << lvl.inv_density[i] << '\n';
    }
  }
}

namespace detail {

inline double cell_min_dist_sq(const Eigen::Vector3d& q,
                               const Eigen::Vector3d& center, double half) {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double lo = center[a] - half, hi = center[a] + half;
    const double d = q[a] < lo ? lo - q[a] : (q[a] > hi ? q[a] - hi : 0.0);
    d2 += d * d;
  }
  return d2;
}

}  // namespace detail

/// Index of the cloud point nearest to q, found by best-first descent with
/// cell-distance pruning over the tree's own cells.
inline std::int64_t nearest_point(const BHTree& tree,
                                  const Eigen::Vector3d& q) {
  const PointCloud& cloud = *tree.source_cloud;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::int64_t best = -1;

  struct Entry {
    int depth;
    std::int32_t index;
    double d2;
  };
  std::vector<Entry> stack;
  stack.push_back({0, 0, 0.0});

  while (!stack.empty()) {
    const Entry e = stack.back();
    stack.pop_back();
    if (e.d2 >= best_d2) continue;
    const DepthLevel& lvl = tree.levels[e.depth];

    if (e.depth == tree.max_depth || lvl.count[e.index] <= 32) {
      for (std::int64_t k = lvl.point_begin[e.index];
           k < lvl.point_end[e.index]; ++k) {
        const std::int64_t pi = tree.sorted_point[k];
        const double d2 = (cloud.points[pi] - q).squaredNorm();
        // Strict < keeps the smallest qualifying index deterministic for
        // ties up to traversal order; the linear oracle breaks ties the
        // same way on distance, so equivalence tests compare distances.
        if (d2 < best_d2) {
          best_d2 = d2;
          best = pi;
        }
      }
      continue;
    }

    std::array<Entry, 8> kids;
    int nk = 0;
    const DepthLevel& fine = tree.levels[e.depth + 1];
    for (const std::int32_t c : lvl.children[e.index]) {
      if (c < 0) continue;
      const double d2 = detail::cell_min_dist_sq(
          q, cell_center_of(fine.mortons[c], e.depth + 1), fine.half_length);
      if (d2 < best_d2) kids[nk++] = {e.depth + 1, c, d2};
    }
    std::sort(kids.begin(), kids.begin() + nk,
              [](const Entry& a, const Entry& b) { return a.d2 > b.d2; });
    for (int k = 0; k < nk; ++k) stack.push_back(kids[k]);
  }
  return best;
}

/// Brute-force reference for the tree query.
inline std::int64_t nearest_point_linear(const PointCloud& cloud,
                                         const Eigen::Vector3d& q) {
  double best_d2 = std::numeric_limits<double>::infinity();
  std::int64_t best = -1;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d2 = (cloud.points[i] - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<std::int64_t>(i);
    }
  }
  return best;
}

}  // namespace treereg
