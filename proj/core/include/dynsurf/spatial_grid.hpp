#pragma once

// Uniform voxel hash over 3D points with exact k-nearest-neighbor and
// radius-existence queries. Candidates are ordered by (squared distance,
// index), so results match a brute-force scan exactly, ties included.

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "dynsurf/geometry.hpp"

namespace dynsurf {

class VoxelGrid {
 public:
  struct Neighbor {
    double d2;
    int32_t index;
    bool operator<(const Neighbor& o) const {
      return d2 != o.d2 ? d2 < o.d2 : index < o.index;
    }
  };

  explicit VoxelGrid(double cell_size) : cell_(cell_size), inv_cell_(1.0 / cell_size) {}

  void reserve(size_t n) { points_.reserve(n); }

  int32_t add_point(const Vec3& p) {
    const int32_t idx = int32_t(points_.size());
    points_.push_back(p);
    const Coord c = coord_of(p);
    cells_[pack(c)].push_back(idx);
    for (int a = 0; a < 3; ++a) {
      min_coord_[a] = std::min(min_coord_[a], c.v[a]);
      max_coord_[a] = std::max(max_coord_[a], c.v[a]);
    }
    return idx;
  }

  size_t size() const { return points_.size(); }
  const Vec3& point(int32_t i) const { return points_[i]; }

  // True when some stored point lies strictly within `radius` of q.
  bool has_point_within(const Vec3& q, double radius) const {
    if (points_.empty()) return false;
    const Coord qc = coord_of(q);
    const int reach = int(std::ceil(radius * inv_cell_));
    const double r2 = radius * radius;
    for (int dz = -reach; dz <= reach; ++dz)
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          const auto it = cells_.find(pack({{qc.v[0] + dx, qc.v[1] + dy, qc.v[2] + dz}}));
          if (it == cells_.end()) continue;
          for (const int32_t idx : it->second)
            if ((points_[idx] - q).squaredNorm() < r2) return true;
        }
    return false;
  }

  // Exact k nearest neighbors of q, sorted by (d2, index).
  std::vector<Neighbor> knn(const Vec3& q, int k) const {
    std::vector<Neighbor> best;
    if (points_.empty() || k <= 0) return best;
    best.reserve(k + 1);

    const Coord qc = coord_of(q);
    int max_ring = 0;
    for (int a = 0; a < 3; ++a) {
      max_ring = std::max(max_ring, std::abs(qc.v[a] - min_coord_[a]));
      max_ring = std::max(max_ring, std::abs(qc.v[a] - max_coord_[a]));
    }
    ++max_ring;

    for (int ring = 0; ring <= max_ring; ++ring) {
      if (int(best.size()) == k) {
        const double bound = double(ring - 1) * cell_;
        if (bound > 0 && bound * bound > best.back().d2) break;
      }
      visit_ring(qc, ring, [&](const std::vector<int32_t>& indices) {
        for (const int32_t idx : indices) {
          const Neighbor cand{(points_[idx] - q).squaredNorm(), idx};
          if (int(best.size()) == k && !(cand < best.back())) continue;
          auto pos = std::lower_bound(best.begin(), best.end(), cand);
          best.insert(pos, cand);
          if (int(best.size()) > k) best.pop_back();
        }
      });
    }
    return best;
  }

 private:
  struct Coord {
    std::array<int32_t, 3> v;
  };

  Coord coord_of(const Vec3& p) const {
    return Coord{{int32_t(std::floor(p[0] * inv_cell_)),
                  int32_t(std::floor(p[1] * inv_cell_)),
                  int32_t(std::floor(p[2] * inv_cell_))}};
  }

  static int64_t pack(const Coord& c) {
    // 21 bits per axis, offset binary
    const int64_t bias = int64_t(1) << 20;
    return ((int64_t(c.v[0]) + bias) << 42) | ((int64_t(c.v[1]) + bias) << 21) |
           (int64_t(c.v[2]) + bias);
  }

  template <typename Fn>
  void visit_ring(const Coord& center, int ring, Fn&& fn) const {
    auto visit = [&](int dx, int dy, int dz) {
      const auto it =
          cells_.find(pack({{center.v[0] + dx, center.v[1] + dy, center.v[2] + dz}}));
      if (it != cells_.end()) fn(it->second);
    };
    if (ring == 0) {
      visit(0, 0, 0);
      return;
    }
    for (int dz = -ring; dz <= ring; ++dz)
      for (int dy = -ring; dy <= ring; ++dy)
        for (int dx = -ring; dx <= ring; ++dx)
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) == ring)
            visit(dx, dy, dz);
  }

  double cell_;
  double inv_cell_;
  std::vector<Vec3> points_;
  std::unordered_map<int64_t, std::vector<int32_t>> cells_;
  std::array<int32_t, 3> min_coord_{{0, 0, 0}};
  std::array<int32_t, 3> max_coord_{{0, 0, 0}};
};

}  // namespace dynsurf
