#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ps3 {

// Fixed 256-token caption vocabulary: specials, colors, glyph shapes and
// image-position words; the remaining slots are named <unused-N>.
namespace vocab {
constexpr std::size_t kSize = 256;
constexpr std::size_t kPad = 0;
constexpr std::size_t kGlobal = 1;
constexpr std::size_t kColorBase = 2;
constexpr std::size_t kNumColors = 8;
constexpr std::size_t kShapeBase = kColorBase + kNumColors;
constexpr std::size_t kNumShapes = 8;
constexpr std::size_t kPositionBase = kShapeBase + kNumShapes;
constexpr std::size_t kNumPositions = 9;
constexpr std::size_t kUsed = kPositionBase + kNumPositions;

inline std::size_t color(std::size_t c) { return kColorBase + c; }
inline std::size_t shape(std::size_t s) { return kShapeBase + s; }
inline std::size_t position(std::size_t p) { return kPositionBase + p; }
}  // namespace vocab

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

const std::vector<std::string>& vocabulary();
std::optional<std::size_t> token_id(const std::string& word);
// Whitespace-separated words to ids. Unknown words raise ArgumentError whose
// message lists the valid words.
std::vector<std::size_t> encode_words(const std::string& text);
std::string decode_caption(const std::vector<std::size_t>& ids);

// Region colors, indexed like the color tokens. None is pure yellow, which the
// selection overlay reserves for its marker.
const std::array<Rgb, vocab::kNumColors>& palette();

// Which of the 3x3 image sectors contains (x, y).
std::size_t position_word(double x, double y, double width, double height);

}  // namespace ps3
