#pragma once

#include <array>
#include <string>

#include "dynsurf/image.hpp"

namespace dynsurf {

// 16-bit single-channel PNG, value = depth in millimeters, 0 = invalid.
Grid<uint16_t> read_depth_png(const std::string& path);
void write_depth_png(const std::string& path, const Grid<uint16_t>& depth);

// 8-bit RGB, used for debug map dumps.
void write_rgb_png(const std::string& path, const Grid<std::array<uint8_t, 3>>& image);

}  // namespace dynsurf
