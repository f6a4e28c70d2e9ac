#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "ps3/datagen/dataset.hpp"
#include "ps3/pretrain/config.hpp"

namespace ps3 {

struct BatchSample {
  std::size_t record = 0;  // index into the dataset
  std::size_t region = 0;  // index into the record's regions
  RegionKind kind = RegionKind::kLocal;
  bool operator==(const BatchSample&) const = default;
};

struct TrainBatch {
  std::vector<BatchSample> samples;  // global samples first
  Designs designs;
  double global_ratio = 0;

  std::size_t global_count() const;
};

// Draws batches from a subset of dataset records. Every draw first picks a
// source tag uniformly among the tags that still have eligible records, then
// a record uniformly within it. Records qualify for global samples through a
// captioned global region and for local samples through a captioned local
// region.
class BatchBuilder {
 public:
  BatchBuilder(const Dataset& dataset, std::vector<std::size_t> records);

  // round(global_ratio * batch_size) global samples (none when mix_global is
  // off), the rest local. With avoid_intra_image every record appears at most
  // once; otherwise local samples take all captioned regions of each drawn
  // record in turn, so regions of one image share a batch. Throws DataError
  // when the pool cannot fill the batch.
  TrainBatch build(const TrainConfig& cfg, std::mt19937_64& rng) const;

  const std::vector<std::size_t>& records() const { return records_; }

 private:
  struct Source {
    std::vector<std::size_t> global;  // records with a captioned global region
    std::vector<std::size_t> local;   // records with a captioned local region
  };
  const Dataset* dataset_;
  std::vector<std::size_t> records_;
  std::vector<Source> sources_;  // indexed by SourceTag
};

TrainBatch build_batch(const Dataset& dataset, const std::vector<std::size_t>& records, const TrainConfig& cfg,
                       std::mt19937_64& rng);

// Captioned regions of one kind in a record.
std::vector<std::size_t> captioned_regions(const DatasetRecord& record, RegionKind kind);

}  // namespace ps3
