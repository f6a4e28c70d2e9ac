#include "ps3/datagen/masks.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ps3/core/errors.hpp"

namespace ps3 {

std::size_t Mask::area() const {
  std::size_t a = 0;
  for (const Run& r : runs) a += r.length;
  return a;
}

double Mask::intersection_area(const Box& box) const {
  double a = 0;
  for (const Run& r : runs) {
    const double y0 = static_cast<double>(r.y), x0 = static_cast<double>(r.x0);
    const double h = std::min(y0 + 1, box.y1) - std::max(y0, box.y0);
    const double w = std::min(x0 + static_cast<double>(r.length), box.x1) - std::max(x0, box.x0);
    if (h > 0 && w > 0) a += h * w;
  }
  return a;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

std::size_t number(const std::string& tok, const std::string& source, std::size_t line) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) throw ParseError(source, line, "expected a number, got '" + tok + "'");
  return v;
}

}  // namespace

MaskSet parse_masks(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  enum class State { kHeader, kSize, kBody, kRuns, kDone } state = State::kHeader;
  MaskSet ms;
  std::size_t runs_left = 0;
  std::size_t mask_line = 0;

  auto finish_mask = [&](std::size_t at) {
    Mask& m = ms.masks.back();
    std::vector<Run> sorted = m.runs;
    std::sort(sorted.begin(), sorted.end(), [](const Run& a, const Run& b) { return std::tie(a.y, a.x0) < std::tie(b.y, b.x0); });
    for (std::size_t i = 1; i < sorted.size(); ++i)
      if (sorted[i].y == sorted[i - 1].y && sorted[i].x0 < sorted[i - 1].x0 + sorted[i - 1].length)
        throw ParseError(source, at, "overlapping runs in mask starting at line " + std::to_string(mask_line));
  };

  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty() || raw[0] == '#') continue;
    const auto tok = split(raw);
    if (tok.empty()) continue;
    switch (state) {
      case State::kHeader:
        if (tok.size() != 2 || tok[0] != "PS3MASKS") throw ParseError(source, line_no, "expected 'PS3MASKS 1'");
        if (tok[1] != "1") throw ParseError(source, line_no, "unsupported mask format version " + tok[1]);
        state = State::kSize;
        break;
      case State::kSize:
        if (tok.size() != 3 || tok[0] != "size") throw ParseError(source, line_no, "expected 'size <width> <height>'");
        ms.width = number(tok[1], source, line_no);
        ms.height = number(tok[2], source, line_no);
        if (ms.width == 0 || ms.height == 0) throw ParseError(source, line_no, "image size must be positive");
        state = State::kBody;
        break;
      case State::kBody:
        if (tok.size() == 1 && tok[0] == "end") {
          state = State::kDone;
          break;
        }
        if (tok.size() != 2 || tok[0] != "mask") throw ParseError(source, line_no, "expected 'mask <runs>' or 'end'");
        runs_left = number(tok[1], source, line_no);
        if (runs_left == 0) throw ParseError(source, line_no, "a mask needs at least one run");
        ms.masks.emplace_back();
        mask_line = line_no;
        state = State::kRuns;
        break;
      case State::kRuns: {
        if (tok.size() != 3) throw ParseError(source, line_no, "expected '<y> <x0> <length>'");
        Run r{number(tok[0], source, line_no), number(tok[1], source, line_no), number(tok[2], source, line_no)};
        if (r.length == 0) throw ParseError(source, line_no, "run length must be positive");
        if (r.y >= ms.height || r.x0 >= ms.width || r.x0 + r.length > ms.width)
          throw ParseError(source, line_no, "run outside the image");
        ms.masks.back().runs.push_back(r);
        if (--runs_left == 0) {
          finish_mask(line_no);
          state = State::kBody;
        }
        break;
      }
      case State::kDone:
        throw ParseError(source, line_no, "content after 'end'");
    }
  }
  if (state == State::kRuns) throw ParseError(source, line_no + 1, "file ends inside a mask");
  if (state != State::kDone) throw ParseError(source, line_no + 1, "missing 'end'");
  return ms;
}

std::string format_masks(const MaskSet& ms) {
  std::ostringstream out;
  out << "PS3MASKS 1\nsize " << ms.width << ' ' << ms.height << '\n';
  for (const Mask& m : ms.masks) {
    out << "mask " << m.runs.size() << '\n';
    for (const Run& r : m.runs) out << r.y << ' ' << r.x0 << ' ' << r.length << '\n';
  }
  out << "end\n";
  return out.str();
}

MaskSet read_masks(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open mask file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_masks(ss.str(), path.string());
}

void write_masks(const std::filesystem::path& path, const MaskSet& masks) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write mask file " + path.string());
  f << format_masks(masks);
}

}  // namespace ps3
