#pragma once

#include <string>

#include "stainer/image.hpp"

namespace stainer {

// Reads 8- or 16-bit PNG/TIFF; values mapped to [0,1] by dividing by the dtype max.
RasterImage load_image(const std::string& path);

// Writes PNG/TIFF by the inverse mapping with round-half-away-from-zero.
// bit_depth must be 8 or 16; values are clamped to [0,1] first.
void save_image(const RasterImage& img, const std::string& path, int bit_depth = 16);

}  // namespace stainer
