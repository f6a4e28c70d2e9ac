#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ps3/core/box.hpp"
#include "ps3/core/image.hpp"

namespace ps3 {

enum class RegionKind { kLocal, kGlobal };
enum class SourceTag { kNatural, kDocument, kCurated };

std::string to_string(RegionKind kind);
std::string to_string(SourceTag tag);
RegionKind region_kind_from_string(const std::string& s);
SourceTag source_tag_from_string(const std::string& s);

// A box with its caption. Global regions cover the whole image.
struct Region {
  Box box;
  std::vector<std::size_t> caption;
  RegionKind kind = RegionKind::kLocal;
  bool operator==(const Region&) const = default;
};

struct DatasetRecord {
  std::string image_path;  // relative to the dataset directory
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Region> regions;
  SourceTag source = SourceTag::kNatural;
  bool operator==(const DatasetRecord&) const = default;
};

// Throws DataError on out-of-bounds or empty boxes, a global region that is
// not the full image, or caption ids outside the vocabulary. Empty captions
// are allowed here (curated records have none); training rejects them.
void validate_record(const DatasetRecord& record);

nlohmann::json record_to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const nlohmann::json& j);

struct Dataset {
  std::filesystem::path root;
  std::vector<DatasetRecord> records;

  std::size_t size() const { return records.size(); }
  Image load_image(std::size_t i) const;
};

// Layout: <dir>/index.jsonl with one JSON object per line, and
// <dir>/images/NNNNNN.ppm. Index lines are appended in add() order.
class DatasetWriter {
 public:
  explicit DatasetWriter(const std::filesystem::path& dir);
  // Writes the raster, fills in record.image_path and appends the index line.
  DatasetRecord add(const Image& image, DatasetRecord record);
  std::size_t count() const { return count_; }

 private:
  std::filesystem::path dir_;
  std::ofstream index_;
  std::size_t count_ = 0;
};

// Reads <dir>/index.jsonl (or an index file given directly) and validates
// every record. A malformed line raises ParseError carrying its line number.
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace ps3
