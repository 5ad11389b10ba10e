#include "natscale/partition.hpp"

#include <algorithm>
#include <unordered_map>

#include <fmt/format.h>

#include "natscale/error.hpp"

namespace natscale {

ScaleIndex::ScaleIndex(int s) : value_(s) {
  if (s < kMin || s > kMax) throw config_error(fmt::format("scale index {} outside [1, 100]", s));
}

Partition Partition::from_labels(std::span<const Label> raw) {
  Partition p;
  p.labels.resize(raw.size());
  std::unordered_map<Label, Label> map;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto [it, inserted] = map.try_emplace(raw[i], p.n_communities);
    if (inserted) ++p.n_communities;
    p.labels[i] = it->second;
  }
  return p;
}

bool Partition::is_dense() const {
  if (labels.empty()) return n_communities == 0;
  std::vector<bool> used(static_cast<std::size_t>(std::max<Label>(n_communities, 0)), false);
  for (Label l : labels) {
    if (l < 0 || l >= n_communities) return false;
    used[static_cast<std::size_t>(l)] = true;
  }
  return std::all_of(used.begin(), used.end(), [](bool b) { return b; });
}

}  // namespace natscale
