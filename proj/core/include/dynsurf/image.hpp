#pragma once

#include <cstdint>
#include <vector>

#include "dynsurf/types.hpp"

namespace dynsurf {

// Row-major dense image grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, const T& fill = T{})
      : width_(width), height_(height), data_(size_t(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }

  T& operator()(int x, int y) { return data_[size_t(y) * width_ + x]; }
  const T& operator()(int x, int y) const { return data_[size_t(y) * width_ + x]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Raw sensor frame: 16-bit depth in millimeters, 0 = invalid.
struct DepthImage {
  Grid<uint16_t> data;
  int frame_index = 0;

  int width() const { return data.width(); }
  int height() const { return data.height(); }
};

// Per-pixel maps derived from one depth image, camera frame.
// vertex_valid marks pixels with an in-range depth; valid additionally
// requires a well-defined central-difference normal.
struct FrameMaps {
  Grid<Vec3> vertices;
  Grid<Vec3> normals;
  Grid<double> confidence;
  Grid<double> radius;
  Grid<uint8_t> vertex_valid;
  Grid<uint8_t> valid;
  CameraIntrinsics intrinsics;
  int frame_index = 0;
  int valid_count = 0;

  int width() const { return vertices.width(); }
  int height() const { return vertices.height(); }
};

}  // namespace dynsurf
