#include "natscale/scalespace.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include <fmt/format.h>

#include "natscale/error.hpp"

namespace natscale {

namespace {

std::int64_t pairs_of(std::int64_t k) { return k * (k - 1) / 2; }

const Partition& dense_or(const Partition& p, Partition& scratch) {
  if (p.is_dense()) return p;
  scratch = Partition::from_labels(p.labels);
  return scratch;
}

}  // namespace

double rand_similarity(const Partition& p_in, const Partition& q_in) {
  if (p_in.size() != q_in.size())
    throw stage_error("rand_similarity", fmt::format("ground sets differ ({} vs {} locations)", p_in.size(), q_in.size()));
  const auto n = static_cast<std::int64_t>(p_in.size());
  if (n < 2) throw stage_error("rand_similarity", "need at least 2 locations");

  Partition p_scratch, q_scratch;
  const Partition& p = dense_or(p_in, p_scratch);
  const Partition& q = dense_or(q_in, q_scratch);
  const auto kp = static_cast<std::size_t>(p.n_communities);
  const auto kq = static_cast<std::size_t>(q.n_communities);

  std::vector<std::int64_t> row(kp, 0), col(kq, 0);
  std::int64_t together_both = 0;
  if (kp * kq <= (std::size_t{1} << 22)) {
    std::vector<std::int64_t> table(kp * kq, 0);
    for (std::size_t i = 0; i < p.size(); ++i)
      ++table[static_cast<std::size_t>(p.labels[i]) * kq + static_cast<std::size_t>(q.labels[i])];
    for (std::size_t a = 0; a < kp; ++a)
      for (std::size_t b = 0; b < kq; ++b) {
        const auto c = table[a * kq + b];
        row[a] += c;
        col[b] += c;
        together_both += pairs_of(c);
      }
  } else {
    std::unordered_map<std::uint64_t, std::int64_t> table;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto a = static_cast<std::uint64_t>(p.labels[i]);
      const auto b = static_cast<std::uint64_t>(q.labels[i]);
      ++table[(a << 32) | b];
      ++row[a];
      ++col[b];
    }
    for (const auto& [key, c] : table) together_both += pairs_of(c);
  }

  std::int64_t together_p = 0, together_q = 0;
  for (auto c : row) together_p += pairs_of(c);
  for (auto c : col) together_q += pairs_of(c);

  const std::int64_t total = pairs_of(n);
  // Agreements: pairs apart in both plus pairs together in both.
  const std::int64_t agree = total - together_p - together_q + 2 * together_both;
  return static_cast<double>(agree) / static_cast<double>(total);
}

SimilarityMatrix similarity_matrix(std::span<const Partition> partitions, PercentileWeighting weighting) {
  SimilarityMatrix m;
  m.n = partitions.size();
  m.weighting = weighting;
  m.values.assign(m.n * m.n, 0.0);
  for (std::size_t i = 0; i < m.n; ++i) {
    m.values[i * m.n + i] = 1.0;
    for (std::size_t j = i + 1; j < m.n; ++j) {
      const double d = rand_similarity(partitions[i], partitions[j]);
      m.values[i * m.n + j] = d;
      m.values[j * m.n + i] = d;
    }
  }
  return m;
}

std::string to_string(CutConvention c) { return c == CutConvention::CrossCut ? "cross_cut" : "literal"; }

CutConvention parse_cut_convention(const std::string& name) {
  if (name == "cross_cut") return CutConvention::CrossCut;
  if (name == "literal") return CutConvention::Literal;
  throw config_error(fmt::format("unknown cut convention '{}' (expected cross_cut or literal)", name));
}

std::string to_string(IntervalScore s) { return s == IntervalScore::SizeWeightedMean ? "size_weighted_mean" : "size_weighted_sum"; }

IntervalScore parse_interval_score(const std::string& name) {
  if (name == "size_weighted_mean") return IntervalScore::SizeWeightedMean;
  if (name == "size_weighted_sum") return IntervalScore::SizeWeightedSum;
  throw config_error(fmt::format("unknown interval score '{}' (expected size_weighted_mean or size_weighted_sum)", name));
}

std::vector<std::pair<int, int>> intervals_of(std::span<const int> breakpoints, int n) {
  std::vector<std::pair<int, int>> out;
  int lo = 1;
  for (int b : breakpoints) {
    out.emplace_back(lo, b);
    lo = b + 1;
  }
  out.emplace_back(lo, n);
  return out;
}

bool valid_breakpoints(std::span<const int> breakpoints, int n, int min_interval) {
  int prev = 0;
  for (int b : breakpoints) {
    if (b - prev < min_interval) return false;
    prev = b;
  }
  return n - prev >= min_interval;
}

namespace {

// Block sums of the matrix via a 2-D prefix table.
class BlockSums {
 public:
  explicit BlockSums(const SimilarityMatrix& m) : n_(m.n), prefix_((m.n + 1) * (m.n + 1), 0.0) {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        at(i + 1, j + 1) = m.values[i * n_ + j] + at(i, j + 1) + at(i + 1, j) - at(i, j);
  }

  // Sum over s, s' in [lo, hi] (1-based, inclusive).
  double square(int lo, int hi) const {
    const auto a = static_cast<std::size_t>(lo - 1);
    const auto b = static_cast<std::size_t>(hi);
    return get(b, b) - get(a, b) - get(b, a) + get(a, a);
  }

 private:
  double& at(std::size_t i, std::size_t j) { return prefix_[i * (n_ + 1) + j]; }
  double get(std::size_t i, std::size_t j) const { return prefix_[i * (n_ + 1) + j]; }

  std::size_t n_;
  std::vector<double> prefix_;
};

Separation separation_with(const SimilarityMatrix& m, const BlockSums* sums, std::span<const int> breakpoints,
                           const SeparationOptions& options) {
  const int n = static_cast<int>(m.n);
  if (breakpoints.empty()) throw stage_error("interval_separation", "separation is undefined without breakpoints");
  int prev = 0;
  for (int b : breakpoints) {
    if (b <= prev || b >= n) throw stage_error("interval_separation", "breakpoints must increase strictly inside (0, n)");
    prev = b;
  }

  Separation sep;
  for (const auto& [lo, hi] : intervals_of(breakpoints, n)) {
    double within = 0.0;
    if (sums) {
      within = sums->square(lo, hi);
    } else {
      for (int s = lo; s <= hi; ++s)
        for (int t = lo; t <= hi; ++t) within += m(s, t);
    }
    const double size = hi - lo + 1;
    sep.numerator += options.score == IntervalScore::SizeWeightedMean ? within / size : size * within;
  }

  if (options.cut == CutConvention::CrossCut) {
    for (int b : breakpoints) sep.denominator = std::max(sep.denominator, m(b, b + 1));
  } else if (breakpoints.size() == 1) {
    sep.denominator = 1.0;  // empty max: neutral
  } else {
    for (std::size_t k = 1; k < breakpoints.size(); ++k)
      sep.denominator = std::max(sep.denominator, m(breakpoints[k] - 1, breakpoints[k]));
  }

  sep.sigma = sep.denominator > 0.0 ? sep.numerator / sep.denominator : std::numeric_limits<double>::infinity();
  return sep;
}

// Candidate ordering: larger sigma; among infinite sigmas, larger numerator.
bool better(const Separation& a, const Separation& b) {
  if (a.sigma != b.sigma) return a.sigma > b.sigma;
  if (a.infinite() && b.infinite()) return a.numerator > b.numerator;
  return false;
}

}  // namespace

Separation interval_separation(const SimilarityMatrix& matrix, std::span<const int> breakpoints,
                               const SeparationOptions& options) {
  return separation_with(matrix, nullptr, breakpoints, options);
}

BreakpointSet detect_breakpoints(const SimilarityMatrix& matrix, int min_interval, const SeparationOptions& options) {
  if (min_interval < 1) throw config_error("min_interval must be >= 1");
  const int n = static_cast<int>(matrix.n);
  const BlockSums sums(matrix);

  BreakpointSet out;
  bool first = true;
  while (true) {
    std::optional<Separation> best;
    int best_b = 0;
    for (int b = 1; b < n; ++b) {
      if (std::binary_search(out.breakpoints.begin(), out.breakpoints.end(), b)) continue;
      std::vector<int> candidate = out.breakpoints;
      candidate.insert(std::upper_bound(candidate.begin(), candidate.end(), b), b);
      if (!valid_breakpoints(candidate, n, min_interval)) continue;
      const Separation sep = separation_with(matrix, &sums, candidate, options);
      if (!best || better(sep, *best)) {
        best = sep;
        best_b = b;
      }
    }
    if (!best) break;
    if (!first && !(best->sigma > out.separation.sigma)) break;
    out.breakpoints.insert(std::upper_bound(out.breakpoints.begin(), out.breakpoints.end(), best_b), best_b);
    out.separation = *best;
    out.trajectory.push_back(*best);
    first = false;
  }
  out.intervals = intervals_of(out.breakpoints, n);
  return out;
}

ScaleIndex prototypical_scale(const SimilarityMatrix& matrix, int lo, int hi) {
  if (lo < 1 || hi < lo || hi > static_cast<int>(matrix.n))
    throw stage_error("prototypical_scale", fmt::format("invalid interval [{}, {}]", lo, hi));
  int best = lo;
  double best_sum = -1.0;
  for (int s = lo; s <= hi; ++s) {
    double sum = 0.0;
    for (int t = lo; t <= hi; ++t) sum += matrix(s, t);
    if (sum > best_sum) {
      best_sum = sum;
      best = s;
    }
  }
  return ScaleIndex(best);
}

std::vector<NaturalScale> natural_scales(const SimilarityMatrix& matrix, const BreakpointSet& breaks,
                                         const PercentileTable& table) {
  std::vector<NaturalScale> out;
  const auto intervals = breaks.intervals.empty() ? intervals_of(breaks.breakpoints, static_cast<int>(matrix.n))
                                                  : breaks.intervals;
  for (const auto& [lo, hi] : intervals)
    out.push_back({lo, hi, prototypical_scale(matrix, lo, hi).value(), table.at(ScaleIndex(hi))});
  return out;
}

std::vector<UserMovements> user_movements(std::span<const Assignment> assignments, std::span<const LocationId> kept,
                                          const LocationRegistry& filtered_registry) {
  std::unordered_map<LocationId, LocationId> to_filtered;
  for (std::size_t i = 0; i < kept.size(); ++i) to_filtered.emplace(kept[i], static_cast<LocationId>(i));

  std::map<std::string, std::vector<LocationId>> visits;
  for (const auto& a : assignments) {
    auto it = to_filtered.find(a.location);
    auto& v = visits[a.user_id];
    if (it != to_filtered.end()) v.push_back(it->second);
  }

  std::vector<UserMovements> out;
  out.reserve(visits.size());
  for (auto& [user, locs] : visits) {
    std::sort(locs.begin(), locs.end());
    locs.erase(std::unique(locs.begin(), locs.end()), locs.end());
    UserMovements um{user, locs.size(), {}};
    for (std::size_t i = 0; i < locs.size(); ++i)
      for (std::size_t j = i + 1; j < locs.size(); ++j)
        um.distances_km.push_back(haversine_km(filtered_registry.position(locs[i]), filtered_registry.position(locs[j])));
    out.push_back(std::move(um));
  }
  return out;
}

std::string scale_class_label(std::span<const int> scales, std::size_t scale_count) {
  std::string label;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (i > 0 && scale_count > 9) label += '.';
    label += std::to_string(scales[i]);
  }
  return label;
}

int natural_scale_of(double distance_km, std::span<const NaturalScale> scales, const PercentileTable& table) {
  const int s = table.scale_for_distance(distance_km).value();
  for (std::size_t k = 0; k < scales.size(); ++k)
    if (s >= scales[k].lo && s <= scales[k].hi) return static_cast<int>(k) + 1;
  throw stage_error("user_profiles", fmt::format("scale {} is not covered by the natural scales", s));
}

UserProfiles user_profiles(std::span<const UserMovements> movements, std::span<const NaturalScale> scales,
                           const PercentileTable& table) {
  if (scales.empty() || scales.front().lo != 1 || scales.back().hi != 100)
    throw stage_error("user_profiles", "natural scales must cover percentiles 1..100");

  UserProfiles out;
  std::map<std::vector<int>, ScaleClassSummary> classes;
  for (const auto& um : movements) {
    if (um.distances_km.empty()) continue;
    std::vector<bool> hit(scales.size(), false);
    for (double d : um.distances_km) hit[static_cast<std::size_t>(natural_scale_of(d, scales, table) - 1)] = true;
    UserScaleProfile prof{um.user_id, {}, um.visited_locations, um.distances_km.size()};
    for (std::size_t k = 0; k < hit.size(); ++k)
      if (hit[k]) prof.contributed_scales.push_back(static_cast<int>(k) + 1);

    auto& cls = classes[prof.contributed_scales];
    cls.scales = prof.contributed_scales;
    ++cls.users;
    cls.mean_visited_locations += static_cast<double>(prof.visited_locations);
    cls.mean_movements += static_cast<double>(prof.movements);
    out.users.push_back(std::move(prof));
  }
  for (auto& [key, cls] : classes) {
    cls.mean_visited_locations /= static_cast<double>(cls.users);
    cls.mean_movements /= static_cast<double>(cls.users);
    out.classes.push_back(cls);
  }
  std::stable_sort(out.classes.begin(), out.classes.end(), [](const auto& a, const auto& b) {
    return a.scales.size() != b.scales.size() ? a.scales.size() < b.scales.size() : a.scales < b.scales;
  });
  return out;
}

void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix& matrix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(fmt::format("cannot write '{}'", path.string()));
  for (std::size_t i = 0; i < matrix.n; ++i) {
    for (std::size_t j = 0; j < matrix.n; ++j) out << (j ? "," : "") << fmt::format("{:.10f}", matrix.values[i * matrix.n + j]);
    out << '\n';
  }
}

void write_dissimilarity_csv(const std::filesystem::path& path, const SimilarityMatrix& matrix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(fmt::format("cannot write '{}'", path.string()));
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : matrix.values) {
    lo = std::min(lo, 1.0 - v);
    hi = std::max(hi, 1.0 - v);
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < matrix.n; ++i) {
    for (std::size_t j = 0; j < matrix.n; ++j) {
      const double d = 1.0 - matrix.values[i * matrix.n + j];
      out << (j ? "," : "") << fmt::format("{:.10f}", range > 0.0 ? (d - lo) / range : 0.0);
    }
    out << '\n';
  }
}

}  // namespace natscale
