#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace segscribe {

/// 8-bit interleaved image with one (gray) or three (RGB) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), 0) {}

  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                   static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels) +
                  static_cast<std::size_t>(c)];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                   static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels) +
                  static_cast<std::size_t>(c)];
  }
  /// Luma in [0, 255] (Rec. 601 weights for RGB).
  double gray(int x, int y) const;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

  bool get(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] != 0;
  }
  void set(int x, int y, bool v) {
    bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] = v ? 1 : 0;
  }
  long count() const;
  bool empty() const { return count() == 0; }
};

struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0, x1) x [y0, y1)
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool valid() const { return x1 > x0 && y1 > y0; }
};

/// Binary PGM (P5) or PPM (P6), maxval 255.
Image read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image& image);

/// 4-connected component labelling; returns the mask of the largest one
/// (ties: the component found first in raster order).
BinaryMask largest_component(const BinaryMask& mask);
int count_components(const BinaryMask& mask);
/// Square structuring element of the given radius.
BinaryMask dilate(const BinaryMask& mask, int radius);
/// Intersection over union; 1 when both masks are empty.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace segscribe
