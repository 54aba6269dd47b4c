#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "nref/common.hpp"

namespace nref {

// Little-endian primitive streams shared by the binary file formats.

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path &path) : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::Format, "cannot open for writing: " + path.string());
  }

  void bytes(const void *data, std::size_t n) { out_.write(static_cast<const char *>(data), n); }
  void u32(std::uint32_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void finish() {
    out_.flush();
    if (!out_) throw Error(ErrorKind::Format, "write failed");
  }

 private:
  void put(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out_.write(reinterpret_cast<const char *>(b), 4);
  }

  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path &path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error(ErrorKind::Format, "cannot open: " + path.string());
  }

  void bytes(void *data, std::size_t n) {
    in_.read(static_cast<char *>(data), n);
    if (!in_) throw Error(ErrorKind::Format, "truncated file: " + path_.string());
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace nref
