#include "ps3/pretrain/batch.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ps3/core/errors.hpp"

namespace ps3 {

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

std::size_t TrainBatch::global_count() const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const BatchSample& s) { return s.kind == RegionKind::kGlobal; }));
}

std::vector<std::size_t> captioned_regions(const DatasetRecord& record, RegionKind kind) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < record.regions.size(); ++i)
    if (record.regions[i].kind == kind && !record.regions[i].caption.empty()) out.push_back(i);
  return out;
}

BatchBuilder::BatchBuilder(const Dataset& dataset, std::vector<std::size_t> records)
    : dataset_(&dataset), records_(std::move(records)), sources_(3) {
  for (std::size_t r : records_) {
    if (r >= dataset.size()) throw ArgumentError("batch: record index out of range");
    const DatasetRecord& rec = dataset.records[r];
    Source& src = sources_[static_cast<std::size_t>(rec.source)];
    if (!captioned_regions(rec, RegionKind::kGlobal).empty()) src.global.push_back(r);
    if (!captioned_regions(rec, RegionKind::kLocal).empty()) src.local.push_back(r);
  }
}

TrainBatch BatchBuilder::build(const TrainConfig& cfg, std::mt19937_64& rng) const {
  TrainBatch batch;
  batch.designs = cfg.designs;
  batch.global_ratio = cfg.designs.mix_global ? cfg.global_ratio : 0.0;
  const std::size_t B = cfg.batch_size;
  const std::size_t n_global =
      static_cast<std::size_t>(std::llround(batch.global_ratio * static_cast<double>(B)));
  const bool unique = cfg.designs.avoid_intra_image;
  std::set<std::size_t> used;

  // Uniform source among those with a remaining candidate, then a uniform
  // candidate. Returns false when nothing is left.
  auto draw = [&](bool global, std::size_t& out) {
    std::vector<std::vector<std::size_t>> pools;
    for (const Source& s : sources_) {
      std::vector<std::size_t> pool;
      for (std::size_t r : global ? s.global : s.local)
        if (!unique || !used.count(r)) pool.push_back(r);
      if (!pool.empty()) pools.push_back(std::move(pool));
    }
    if (pools.empty()) return false;
    const auto& pool = pools[pick(rng, pools.size())];
    out = pool[pick(rng, pool.size())];
    return true;
  };
  auto fail = [&]() {
    throw DataError("batch: " + std::to_string(records_.size()) + " records cannot fill a batch of " +
                    std::to_string(B) + (unique ? " with distinct images" : ""));
  };

  for (std::size_t i = 0; i < n_global; ++i) {
    std::size_t r = 0;
    if (!draw(true, r)) fail();
    used.insert(r);
    const auto regions = captioned_regions(dataset_->records[r], RegionKind::kGlobal);
    batch.samples.push_back({r, regions[pick(rng, regions.size())], RegionKind::kGlobal});
  }
  while (batch.samples.size() < B) {
    std::size_t r = 0;
    if (!draw(false, r)) fail();
    used.insert(r);
    auto regions = captioned_regions(dataset_->records[r], RegionKind::kLocal);
    if (unique) {
      batch.samples.push_back({r, regions[pick(rng, regions.size())], RegionKind::kLocal});
    } else {
      std::shuffle(regions.begin(), regions.end(), rng);
      for (std::size_t g : regions) {
        if (batch.samples.size() == B) break;
        batch.samples.push_back({r, g, RegionKind::kLocal});
      }
    }
  }
  return batch;
}

TrainBatch build_batch(const Dataset& dataset, const std::vector<std::size_t>& records, const TrainConfig& cfg,
                       std::mt19937_64& rng) {
  return BatchBuilder(dataset, records).build(cfg, rng);
}

}  // namespace ps3
