#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace natscale {

using Label = std::int32_t;

/// Scale (distance percentile) index, 1..100.
class ScaleIndex {
 public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 100;

  /// Throws Error(Config) outside [1, 100].
  explicit ScaleIndex(int s);

  int value() const { return value_; }
  friend auto operator<=>(const ScaleIndex&, const ScaleIndex&) = default;

 private:
  int value_;
};

/// Assignment of every location to a community. Labels are dense: 0..n_communities-1.
struct Partition {
  std::vector<Label> labels;
  Label n_communities = 0;
  std::optional<ScaleIndex> source_scale;
  double quality = 0.0;  // modularity on the source graph, when known

  /// Relabels densely in order of first appearance (location 0 gets label 0).
  static Partition from_labels(std::span<const Label> raw);

  std::size_t size() const { return labels.size(); }
  /// True when labels are exactly 0..n_communities-1 with every label used.
  bool is_dense() const;
};

}  // namespace natscale
