#include "ps3/datagen/vocab.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "ps3/core/errors.hpp"

namespace ps3 {

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w{"<pad>", "<global>"};
    for (const char* c : {"red", "green", "blue", "orange", "purple", "cyan", "white", "pink"}) w.push_back(c);
    for (const char* s : {"hbars", "vbars", "checker", "tophalf", "bottomhalf", "lefthalf", "righthalf", "blocks"})
      w.push_back(s);
    for (const char* p : {"upper-left", "upper", "upper-right", "left", "center", "right", "lower-left", "lower",
                          "lower-right"})
      w.push_back(p);
    while (w.size() < vocab::kSize) w.push_back("<unused-" + std::to_string(w.size()) + ">");
    return w;
  }();
  return words;
}

std::optional<std::size_t> token_id(const std::string& word) {
  static const std::unordered_map<std::string, std::size_t> index = [] {
    std::unordered_map<std::string, std::size_t> m;
    const auto& v = vocabulary();
    for (std::size_t i = 0; i < v.size(); ++i) m[v[i]] = i;
    return m;
  }();
  auto it = index.find(word);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> encode_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::size_t> ids;
  std::string w;
  while (in >> w) {
    auto id = token_id(w);
    if (!id) {
      std::string valid;
      const auto& v = vocabulary();
      for (std::size_t i = 0; i < vocab::kUsed; ++i) valid += (i ? " " : "") + v[i];
      throw ArgumentError("unknown prompt word '" + w + "'; valid words: " + valid);
    }
    ids.push_back(*id);
  }
  return ids;
}

std::string decode_caption(const std::vector<std::size_t>& ids) {
  std::string out;
  const auto& v = vocabulary();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v.size()) throw ArgumentError("token id " + std::to_string(ids[i]) + " outside vocabulary");
    out += (i ? " " : "") + v[ids[i]];
  }
  return out;
}

const std::array<Rgb, vocab::kNumColors>& palette() {
  static const std::array<Rgb, vocab::kNumColors> p{{{225, 45, 45},
                                                     {45, 190, 70},
                                                     {55, 90, 235},
                                                     {245, 145, 25},
                                                     {150, 60, 210},
                                                     {40, 205, 215},
                                                     {245, 245, 245},
                                                     {240, 110, 185}}};
  return p;
}

std::size_t position_word(double x, double y, double width, double height) {
  const auto third = [](double v, double extent) {
    return static_cast<std::size_t>(std::clamp(static_cast<long>(3 * v / extent), 0L, 2L));
  };
  return third(y, height) * 3 + third(x, width);
}

}  // namespace ps3
