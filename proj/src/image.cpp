#include "nref/image.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <png.h>

namespace nref {

void write_pfm(const std::filesystem::path &path, const Image &image, bool grayscale) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Format, "cannot open for writing: " + path.string());
  out << (grayscale ? "Pf" : "PF") << "\n" << image.width << " " << image.height << "\n-1.0\n";
  std::vector<float> row;
  for (int y = image.height - 1; y >= 0; --y) {
    row.clear();
    for (int x = 0; x < image.width; ++x) {
      const Vec3 &p = image.at(x, y);
      if (grayscale) {
        row.push_back(static_cast<float>(p.x()));
      } else {
        for (int c = 0; c < 3; ++c) row.push_back(static_cast<float>(p[c]));
      }
    }
    for (float f : row) {
      const auto u = std::bit_cast<std::uint32_t>(f);
      const char b[4] = {char(u & 0xff), char((u >> 8) & 0xff), char((u >> 16) & 0xff), char(u >> 24)};
      out.write(b, 4);
    }
  }
  if (!out) throw Error(ErrorKind::Format, "write failed: " + path.string());
}

Image read_pfm(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Format, "cannot open: " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || scale == 0.0) {
    throw Error(ErrorKind::Format, "not a PFM file: " + path.string());
  }
  const int channels = magic == "PF" ? 3 : 1;
  const bool little = scale < 0.0;
  Image img(w, h);
  std::vector<unsigned char> buf(std::size_t(w) * channels * 4);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw Error(ErrorKind::Format, "truncated PFM: " + path.string());
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        const unsigned char *b = &buf[(std::size_t(x) * channels + c) * 4];
        const std::uint32_t u = little ? (b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24))
                                       : (b[3] | (b[2] << 8) | (b[1] << 16) | (std::uint32_t(b[0]) << 24));
        const double v = std::bit_cast<float>(u);
        if (channels == 1) {
          img.at(x, y) = Vec3::Constant(v);
        } else {
          img.at(x, y)[c] = v;
        }
      }
    }
  }
  return img;
}

void write_png(const std::filesystem::path &path, const Image &image, double exposure,
               const std::vector<double> *alpha) {
  FILE *fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw Error(ErrorKind::Format, "cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorKind::Format, "PNG encoding failed: " + path.string());
  }
  png_init_io(png, fp);
  const int channels = alpha ? 4 : 3;
  png_set_IHDR(png, info, image.width, image.height, 8, alpha ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(std::size_t(image.width) * channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Vec3 &p = image.at(x, y);
      for (int c = 0; c < 3; ++c) {
        const double v = std::pow(std::clamp(p[c] * exposure, 0.0, 1.0), 1.0 / 2.2);
        row[std::size_t(x) * channels + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
      if (alpha) {
        const double a = std::clamp((*alpha)[std::size_t(y) * image.width + x], 0.0, 1.0);
        row[std::size_t(x) * channels + 3] = static_cast<png_byte>(std::lround(a * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

double psnr(const Image &a, const Image &b, const std::vector<bool> &mask) {
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    se += (a.pixels[i] - b.pixels[i]).squaredNorm();
    n += 3;
  }
  if (n == 0) return 0.0;
  const double mse = se / static_cast<double>(n);
  return mse > 0.0 ? -10.0 * std::log10(mse) : std::numeric_limits<double>::infinity();
}

}  // namespace nref
