#include "dynsurf/ply_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "dynsurf/errors.hpp"

namespace dynsurf {

namespace {
const char* kProperties[] = {"x", "y", "z", "nx", "ny", "nz", "radius", "confidence"};
constexpr int kPropertyCount = 8;
}  // namespace

void export_pointcloud(const SurfelModel& model, ModelSide side, const std::string& path) {
  if (model.size() == 0) throw EmptyGeometry("export_pointcloud: empty model");
  const std::vector<Surfel>& surfels =
      side == ModelSide::kReference ? model.reference : model.live;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot create PLY: " + path);

  out << "ply\n"
      << "format binary_little_endian 1.0\n"
      << "element vertex " << surfels.size() << "\n";
  for (const char* prop : kProperties) out << "property double " << prop << "\n";
  out << "end_header\n";

  for (const auto& s : surfels) {
    const double record[kPropertyCount] = {s.position[0], s.position[1], s.position[2],
                                           s.normal[0],   s.normal[1],   s.normal[2],
                                           s.radius,      s.confidence};
    out.write(reinterpret_cast<const char*>(record), sizeof(record));
  }
  if (!out) throw IoFailure("failed writing PLY: " + path);
}

PlyCloud read_pointcloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open PLY: " + path);

  std::string line;
  size_t vertex_count = 0;
  int property_index = 0;
  bool header_done = false;

  if (!std::getline(in, line) || line != "ply") throw IoFailure("not a PLY file: " + path);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    if (token == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian")
        throw IoFailure("unsupported PLY format in " + path);
    } else if (token == "element") {
      std::string kind;
      ls >> kind >> vertex_count;
      if (kind != "vertex") throw IoFailure("unsupported PLY element in " + path);
    } else if (token == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "double" || property_index >= kPropertyCount ||
          name != kProperties[property_index])
        throw IoFailure("unexpected PLY property in " + path);
      ++property_index;
    } else if (token == "end_header") {
      header_done = true;
      break;
    } else if (token == "comment") {
      continue;
    } else {
      throw IoFailure("unexpected PLY header line in " + path);
    }
  }
  if (!header_done || property_index != kPropertyCount)
    throw IoFailure("malformed PLY header in " + path);

  PlyCloud cloud;
  cloud.positions.resize(vertex_count);
  cloud.normals.resize(vertex_count);
  cloud.radii.resize(vertex_count);
  cloud.confidences.resize(vertex_count);
  for (size_t i = 0; i < vertex_count; ++i) {
    double record[kPropertyCount];
    in.read(reinterpret_cast<char*>(record), sizeof(record));
    if (!in) throw IoFailure("truncated PLY: " + path);
    cloud.positions[i] = Vec3(record[0], record[1], record[2]);
    cloud.normals[i] = Vec3(record[3], record[4], record[5]);
    cloud.radii[i] = record[6];
    cloud.confidences[i] = record[7];
  }
  return cloud;
}

}  // namespace dynsurf
