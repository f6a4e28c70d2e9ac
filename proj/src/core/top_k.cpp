#include "ps3/core/top_k.hpp"

#include <algorithm>
#include <numeric>

namespace ps3 {

template <typename T>
TopKResult top_k(std::span<const T> scores, std::size_t k, TieRule) {
  TopKResult out;
  if (k > scores.size()) {
    k = scores.size();
    out.capped = true;
  }
  if (k == 0) return out;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), before);
  order.resize(k);
  std::sort(order.begin(), order.end());
  out.indices = std::move(order);
  return out;
}

template TopKResult top_k<float>(std::span<const float>, std::size_t, TieRule);
template TopKResult top_k<double>(std::span<const double>, std::size_t, TieRule);

}  // namespace ps3
