#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ps3 {

// 8-bit RGB raster, row-major, interleaved channels.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(w * h * 3, fill) {}

  std::uint8_t* pixel(std::size_t x, std::size_t y) { return rgb.data() + (y * width + x) * 3; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const { return rgb.data() + (y * width + x) * 3; }
  bool operator==(const Image&) const = default;
};

// Floating-point RGB in [0, 1], [height x width x 3] layout.
struct ImageF {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> rgb;

  ImageF() = default;
  ImageF(std::size_t w, std::size_t h, float fill = 0.f) : width(w), height(h), rgb(w * h * 3, fill) {}

  float* pixel(std::size_t x, std::size_t y) { return rgb.data() + (y * width + x) * 3; }
  const float* pixel(std::size_t x, std::size_t y) const { return rgb.data() + (y * width + x) * 3; }
};

ImageF to_float(const Image& img);
Image to_u8(const ImageF& img);

// Area averaging when both factors are integer downscales, bilinear with
// half-pixel centers otherwise.
ImageF resize(const ImageF& img, std::size_t width, std::size_t height);

// Binary PPM (P6, maxval 255).
std::string encode_ppm(const Image& img);
Image decode_ppm(const std::string& bytes, const std::string& source = "<memory>");
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

}  // namespace ps3
