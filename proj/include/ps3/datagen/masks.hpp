#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ps3/core/box.hpp"

namespace ps3 {

// One horizontal run of set pixels: row y, columns [x0, x0 + length).
struct Run {
  std::size_t y = 0;
  std::size_t x0 = 0;
  std::size_t length = 0;
  bool operator==(const Run&) const = default;
};

struct Mask {
  std::vector<Run> runs;
  std::size_t area() const;
  // Area of the mask's pixels (unit squares) inside a box.
  double intersection_area(const Box& box) const;
  bool operator==(const Mask&) const = default;
};

struct MaskSet {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Mask> masks;
  bool operator==(const MaskSet&) const = default;
};

// Text format, one item per line, tokens separated by single spaces:
//   PS3MASKS 1
//   size <width> <height>
//   mask <run count>
//   <y> <x0> <length>          (run count lines)
//   ... more mask blocks ...
//   end
// Blank lines and lines starting with '#' are ignored. Runs must lie inside
// the image, have positive length and not overlap within a mask; every mask
// needs at least one run. Violations raise ParseError with the line number.
MaskSet parse_masks(const std::string& text, const std::string& source = "<memory>");
std::string format_masks(const MaskSet& masks);
MaskSet read_masks(const std::filesystem::path& path);
void write_masks(const std::filesystem::path& path, const MaskSet& masks);

}  // namespace ps3
