#pragma once

#include <filesystem>
#include <vector>

#include "nref/common.hpp"

namespace nref {

/// RGB float image, row 0 on top.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Vec3> pixels;

  Image() = default;
  Image(int w, int h, const Vec3 &fill = Vec3::Zero()) : width(w), height(h), pixels(std::size_t(w) * h, fill) {}

  Vec3 &at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
  const Vec3 &at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
};

/// Portable float map. Writes 'PF' (RGB) or 'Pf' (first channel only) little-endian with the
/// standard bottom-to-top row order; reads both variants and either endianness.
void write_pfm(const std::filesystem::path &path, const Image &image, bool grayscale = false);
Image read_pfm(const std::filesystem::path &path);

/// 8-bit sRGB-ish preview: exposure scale, clamp, gamma 2.2.
void write_png(const std::filesystem::path &path, const Image &image, double exposure = 1.0,
               const std::vector<double> *alpha = nullptr);

/// PSNR (peak 1) over pixels where mask is true; all pixels when mask is empty.
double psnr(const Image &a, const Image &b, const std::vector<bool> &mask = {});

}  // namespace nref
