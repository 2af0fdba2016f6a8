#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpreg/expr.hpp"

namespace gpreg {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit grayscale raster, row-major, origin top-left, x = column, y = row.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  // True when (x, y) lies inside [0, width-1] x [0, height-1].
  bool contains(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0;
  }
};

// Binary PGM (P5, maxval 255) or 8-bit grayscale PNG, chosen by file
// extension. Color or 16-bit inputs are rejected, never converted.
GrayImage load_image(const std::string& path);
void save_image(const GrayImage& img, const std::string& path);

// Bilinear intensity at a real position; requires img.contains(x, y).
double bilinear(const GrayImage& img, double x, double y);

struct RegistrationRendering {
  GrayImage warped;                      // sensed mapped into the reference frame
  std::vector<std::uint8_t> valid_mask;  // 1 where some source pixel landed
};

// Forward-maps every sensed pixel through (tx, ty) and splats it at the
// rounded target; later source pixels overwrite earlier ones (row-major
// source order). Off-raster targets are dropped.
RegistrationRendering warp_to_reference(const GrayImage& sensed, const Expr& tx,
                                        const Expr& ty, int ref_width,
                                        int ref_height);

// |reference - warped| where the mask is set, 0 elsewhere.
GrayImage difference_image(const GrayImage& reference,
                           const RegistrationRendering& rendering);

}  // namespace gpreg
