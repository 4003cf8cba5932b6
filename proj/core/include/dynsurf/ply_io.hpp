#pragma once

#include <string>
#include <vector>

#include "dynsurf/types.hpp"

namespace dynsurf {

enum class ModelSide { kReference, kLive };

// Binary little-endian PLY with double-precision position, normal, radius
// and confidence per vertex. Written surfels round-trip bit exactly.
void export_pointcloud(const SurfelModel& model, ModelSide side,
                       const std::string& path);

struct PlyCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<double> radii;
  std::vector<double> confidences;

  size_t size() const { return positions.size(); }
};

PlyCloud read_pointcloud(const std::string& path);

}  // namespace dynsurf
