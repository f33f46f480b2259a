#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace spm {

/// Side length every image is resized to at ingestion. All patch counts in
/// {4, 16, 64, 256} tile a 32x32 image evenly.
inline constexpr int kCanonicalSize = 32;

/// Dense H x W x C float image, intensities in [0, 1], stored row-major with
/// interleaved channels (HWC).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || c <= 0) {
      throw std::invalid_argument("Image: dimensions must be positive");
    }
  }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int y, int x, int c) { return data[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data[index(y, x, c)]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool is_canonical() const {
    return height == kCanonicalSize && width == kCanonicalSize && channels == 3;
  }

  void clamp01() {
    for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && a.data == b.data;
  }
};

inline void require_canonical(const Image& img, const char* where) {
  if (!img.is_canonical()) {
    throw std::invalid_argument(
        std::string(where) + ": expected a canonical " +
        std::to_string(kCanonicalSize) + "x" + std::to_string(kCanonicalSize) +
        "x3 image, got " + std::to_string(img.height) + "x" +
        std::to_string(img.width) + "x" + std::to_string(img.channels) +
        "; resize inputs with resize_to_canonical() at ingestion");
  }
}

/// Bilinear resample of an arbitrary source box [y0, y0+h) x [x0, x0+w)
/// (continuous pixel coordinates) onto an out_h x out_w grid. Samples outside
/// the image clamp to the border.
Image resample_box(const Image& src, double y0, double x0, double h, double w,
                   int out_h, int out_w);

inline Image resize_to_canonical(const Image& src) {
  if (src.is_canonical()) return src;
  Image rgb = src;
  if (src.channels != 3) {
    rgb = Image(src.height, src.width, 3);
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x)
        for (int c = 0; c < 3; ++c)
          rgb.at(y, x, c) = src.at(y, x, std::min(c, src.channels - 1));
  }
  return resample_box(rgb, 0.0, 0.0, rgb.height, rgb.width, kCanonicalSize,
                      kCanonicalSize);
}

}  // namespace spm
