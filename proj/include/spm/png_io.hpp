#pragma once

#include <string>

#include "spm/image.hpp"

namespace spm {

/// Reads an 8-bit PNG (gray, gray+alpha, RGB or RGBA) as an RGB float image
/// with intensities v / 255.
Image read_png(const std::string& path);

/// Writes an 8-bit RGB PNG, quantising each intensity as round(clamp(v) * 255).
void write_png(const std::string& path, const Image& img);

inline unsigned char quantize8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(c * 255.0f + 0.5f);
}

}  // namespace spm
