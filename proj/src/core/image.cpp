#include "ps3/core/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ps3/core/errors.hpp"
#include "ps3/core/ops.hpp"

namespace ps3 {

ImageF to_float(const Image& img) {
  ImageF out(img.width, img.height);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) out.rgb[i] = static_cast<float>(img.rgb[i]) / 255.f;
  return out;
}

Image to_u8(const ImageF& img) {
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    const float v = std::clamp(img.rgb[i], 0.f, 1.f);
    out.rgb[i] = static_cast<std::uint8_t>(std::lround(v * 255.f));
  }
  return out;
}

ImageF resize(const ImageF& img, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || img.width == 0 || img.height == 0) throw ArgumentError("resize: empty image");
  if (width == img.width && height == img.height) return img;
  ImageF out(width, height);
  if (img.width % width == 0 && img.height % height == 0) {
    const std::size_t fx = img.width / width, fy = img.height / height;
    const float inv = 1.f / static_cast<float>(fx * fy);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        float acc[3] = {0, 0, 0};
        for (std::size_t dy = 0; dy < fy; ++dy)
          for (std::size_t dx = 0; dx < fx; ++dx) {
            const float* p = img.pixel(x * fx + dx, y * fy + dy);
            for (int c = 0; c < 3; ++c) acc[c] += p[c];
          }
        float* o = out.pixel(x, y);
        for (int c = 0; c < 3; ++c) o[c] = acc[c] * inv;
      }
    return out;
  }
  for (std::size_t y = 0; y < height; ++y) {
    const LinearTaps ty = linear_taps(half_pixel_coordinate(y, img.height, height), img.height);
    for (std::size_t x = 0; x < width; ++x) {
      const LinearTaps tx = linear_taps(half_pixel_coordinate(x, img.width, width), img.width);
      const float wy = static_cast<float>(ty.w_hi), wx = static_cast<float>(tx.w_hi);
      float* o = out.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        o[c] = (1 - wy) * ((1 - wx) * img.pixel(tx.lo, ty.lo)[c] + wx * img.pixel(tx.hi, ty.lo)[c]) +
               wy * ((1 - wx) * img.pixel(tx.lo, ty.hi)[c] + wx * img.pixel(tx.hi, ty.hi)[c]);
      }
    }
  }
  return out;
}

std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
  return out;
}

Image decode_ppm(const std::string& bytes, const std::string& source) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P6") throw DataError(source + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token());
    h = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::exception&) {
    throw DataError(source + ": malformed PPM header");
  }
  if (maxval != 255) throw DataError(source + ": only maxval 255 is supported");
  ++pos;  // single whitespace before raster
  if (bytes.size() < pos + w * h * 3) throw DataError(source + ": truncated PPM raster");
  Image img(w, h);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), w * h * 3, img.rgb.begin());
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  const std::string bytes = encode_ppm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_ppm(ss.str(), path.string());
}

}  // namespace ps3
