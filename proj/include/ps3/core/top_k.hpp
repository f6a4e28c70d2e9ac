#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ps3 {

enum class TieRule { kLowestIndex };

struct TopKResult {
  // Ascending index order.
  std::vector<std::size_t> indices;
  // k exceeded the list length and was reduced to it.
  bool capped = false;
};

// Indices of the k largest scores. Equal scores prefer the lower index, so the
// result is reproducible on every platform.
template <typename T>
TopKResult top_k(std::span<const T> scores, std::size_t k, TieRule rule = TieRule::kLowestIndex);

}  // namespace ps3
