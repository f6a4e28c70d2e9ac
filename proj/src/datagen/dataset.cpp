#include "ps3/datagen/dataset.hpp"

#include <cstdio>
#include <sstream>

#include "ps3/core/errors.hpp"
#include "ps3/datagen/vocab.hpp"

namespace ps3 {

using nlohmann::json;

std::string to_string(RegionKind kind) { return kind == RegionKind::kGlobal ? "global" : "local"; }

std::string to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::kNatural: return "natural";
    case SourceTag::kDocument: return "document";
    case SourceTag::kCurated: return "curated";
  }
  return "natural";
}

RegionKind region_kind_from_string(const std::string& s) {
  if (s == "local") return RegionKind::kLocal;
  if (s == "global") return RegionKind::kGlobal;
  throw DataError("unknown region kind '" + s + "'");
}

SourceTag source_tag_from_string(const std::string& s) {
  if (s == "natural") return SourceTag::kNatural;
  if (s == "document") return SourceTag::kDocument;
  if (s == "curated") return SourceTag::kCurated;
  throw DataError("unknown source tag '" + s + "'");
}

void validate_record(const DatasetRecord& r) {
  if (r.width == 0 || r.height == 0) throw DataError("record has an empty image size");
  const double W = static_cast<double>(r.width), H = static_cast<double>(r.height);
  for (std::size_t i = 0; i < r.regions.size(); ++i) {
    const Region& g = r.regions[i];
    const Box& b = g.box;
    const std::string where = "region " + std::to_string(i) + ": ";
    if (!(b.x0 >= 0 && b.x0 < b.x1 && b.x1 <= W && b.y0 >= 0 && b.y0 < b.y1 && b.y1 <= H))
      throw DataError(where + "box outside the image or empty");
    if (g.kind == RegionKind::kGlobal && !(b == Box{0, 0, W, H}))
      throw DataError(where + "global region must cover the whole image");
    for (std::size_t id : g.caption)
      if (id >= vocab::kSize) throw DataError(where + "caption token " + std::to_string(id) + " outside vocabulary");
  }
}

json record_to_json(const DatasetRecord& r) {
  json regions = json::array();
  for (const Region& g : r.regions)
    regions.push_back({{"kind", to_string(g.kind)},
                       {"box", {g.box.x0, g.box.y0, g.box.x1, g.box.y1}},
                       {"caption", g.caption}});
  return {{"image", r.image_path},
          {"width", r.width},
          {"height", r.height},
          {"source", to_string(r.source)},
          {"regions", regions}};
}

DatasetRecord record_from_json(const json& j) {
  try {
    DatasetRecord r;
    r.image_path = j.at("image").get<std::string>();
    r.width = j.at("width").get<std::size_t>();
    r.height = j.at("height").get<std::size_t>();
    r.source = source_tag_from_string(j.at("source").get<std::string>());
    for (const json& g : j.at("regions")) {
      Region region;
      region.kind = region_kind_from_string(g.at("kind").get<std::string>());
      const auto& b = g.at("box");
      if (!b.is_array() || b.size() != 4) throw DataError("box must have four numbers");
      region.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      region.caption = g.at("caption").get<std::vector<std::size_t>>();
      r.regions.push_back(std::move(region));
    }
    validate_record(r);
    return r;
  } catch (const json::exception& e) {
    throw DataError(e.what());
  }
}

Image Dataset::load_image(std::size_t i) const {
  if (i >= records.size()) throw ArgumentError("record index out of range");
  Image img = read_ppm(root / records[i].image_path);
  if (img.width != records[i].width || img.height != records[i].height)
    throw DataError(records[i].image_path + ": raster size does not match the index");
  return img;
}

DatasetWriter::DatasetWriter(const std::filesystem::path& dir) : dir_(dir) {
  std::filesystem::create_directories(dir_ / "images");
  index_.open(dir_ / "index.jsonl", std::ios::binary | std::ios::trunc);
  if (!index_) throw DataError("cannot write " + (dir_ / "index.jsonl").string());
}

DatasetRecord DatasetWriter::add(const Image& image, DatasetRecord record) {
  char name[32];
  std::snprintf(name, sizeof name, "images/%06zu.ppm", count_);
  record.image_path = name;
  record.width = image.width;
  record.height = image.height;
  validate_record(record);
  write_ppm(dir_ / record.image_path, image);
  index_ << record_to_json(record).dump() << '\n';
  index_.flush();
  if (!index_) throw DataError("failed writing the dataset index");
  ++count_;
  return record;
}

Dataset read_dataset(const std::filesystem::path& path) {
  const bool is_dir = std::filesystem::is_directory(path);
  const std::filesystem::path index = is_dir ? path / "index.jsonl" : path;
  std::ifstream in(index, std::ios::binary);
  if (!in) throw DataError("cannot open dataset index " + index.string());
  Dataset ds;
  ds.root = is_dir ? path : path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ds.records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(index.string(), line_no, e.what());
    } catch (const DataError& e) {
      throw ParseError(index.string(), line_no, e.what());
    }
  }
  return ds;
}

}  // namespace ps3
