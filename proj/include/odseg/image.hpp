#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace odseg {

/// 8-bit image, interleaved channels, row-major.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  RawImage() = default;
  RawImage(int w, int h, int c, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const RawImage&) const = default;
};

/// Single-channel floating-point image, row-major.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  FloatImage() = default;
  FloatImage(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const FloatImage&) const = default;
};

/// Reads binary PGM (P5) or PPM (P6) with maxval 255. Throws FormatError.
RawImage read_pnm(const std::filesystem::path& path);
RawImage decode_pnm(const std::string& bytes);

/// Writes P5 for 1-channel images and P6 for 3-channel images.
void write_pnm(const std::filesystem::path& path, const RawImage& img);
std::string encode_pnm(const RawImage& img);

}  // namespace odseg
