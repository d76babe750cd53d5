#pragma once

#include <string>

#include "splitfusion/core_geometry.hpp"

namespace splitfusion {

// 16-bit grayscale PNGs (TUM depth maps, instance label images).
Image<uint16_t> read_png16(const std::string& path);
void write_png16(const std::string& path, const Image<uint16_t>& img);

// 8-bit RGB PNGs.
Image<std::array<uint8_t, 3>> read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const Image<std::array<uint8_t, 3>>& img);

}  // namespace splitfusion
