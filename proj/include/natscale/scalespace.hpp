#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "natscale/graph.hpp"
#include "natscale/ingest.hpp"
#include "natscale/partition.hpp"

namespace natscale {

/// Rand similarity: share of unordered location pairs that both partitions classify
/// the same way (together in both or apart in both). Uses a contingency table.
double rand_similarity(const Partition& p, const Partition& q);

/// Symmetric matrix of pairwise partition similarities; index i holds scale i + 1.
struct SimilarityMatrix {
  std::size_t n = 0;
  std::vector<double> values;  // row-major n x n
  PercentileWeighting weighting = PercentileWeighting::ByWeight;

  /// 1-based scale indices.
  double operator()(int s, int t) const {
    return values[static_cast<std::size_t>(s - 1) * n + static_cast<std::size_t>(t - 1)];
  }
  double& operator()(int s, int t) { return values[static_cast<std::size_t>(s - 1) * n + static_cast<std::size_t>(t - 1)]; }
};

SimilarityMatrix similarity_matrix(std::span<const Partition> partitions,
                                   PercentileWeighting weighting = PercentileWeighting::ByWeight);

/// Which scale pair measures the similarity across a breakpoint.
enum class CutConvention {
  CrossCut,  // max over all breakpoints b of sim(b, b+1)
  Literal,   // max over breakpoints except the first of sim(b-1, b)
};

/// How intervals contribute to the numerator of the separation score.
enum class IntervalScore {
  SizeWeightedMean,  // sum over intervals of |I| * mean similarity within I
  SizeWeightedSum,   // sum over intervals of |I| * total similarity within I
};

std::string to_string(CutConvention c);
CutConvention parse_cut_convention(const std::string& name);
std::string to_string(IntervalScore s);
IntervalScore parse_interval_score(const std::string& name);

struct SeparationOptions {
  CutConvention cut = CutConvention::CrossCut;
  IntervalScore score = IntervalScore::SizeWeightedMean;
};

struct Separation {
  double numerator = 0.0;
  double denominator = 0.0;
  double sigma = 0.0;  // +infinity when the denominator is zero

  bool infinite() const { return sigma == std::numeric_limits<double>::infinity(); }
};

/// Interval separation of a sorted breakpoint list (scale b closes the interval (., b]).
/// Throws when `breakpoints` is empty or not strictly increasing inside [1, n-1].
Separation interval_separation(const SimilarityMatrix& matrix, std::span<const int> breakpoints,
                               const SeparationOptions& options = {});

inline constexpr int kDefaultMinInterval = 5;

struct BreakpointSet {
  std::vector<int> breakpoints;                 // strictly increasing
  std::vector<std::pair<int, int>> intervals;   // inclusive 1-based [lo, hi]
  Separation separation;
  std::vector<Separation> trajectory;           // score after each accepted breakpoint
};

/// Intervals (0, b0], (b0, b1], ..., (bn, n] as inclusive [lo, hi] pairs.
std::vector<std::pair<int, int>> intervals_of(std::span<const int> breakpoints, int n);

/// True when every interval has at least `min_interval` scales.
bool valid_breakpoints(std::span<const int> breakpoints, int n, int min_interval);

/// Greedy search: the first breakpoint is the best single cut; further breakpoints are
/// added one at a time while the best addition strictly raises the separation.
/// Returns an empty set only when no cut respects `min_interval`.
BreakpointSet detect_breakpoints(const SimilarityMatrix& matrix, int min_interval = kDefaultMinInterval,
                                 const SeparationOptions& options = {});

/// Scale in [lo, hi] with the largest summed similarity to the rest; ties go low.
ScaleIndex prototypical_scale(const SimilarityMatrix& matrix, int lo, int hi);

struct NaturalScale {
  int lo = 1;
  int hi = 100;
  int prototype = 1;
  double threshold_km = 0.0;  // m at the upper bound of the interval
};

std::vector<NaturalScale> natural_scales(const SimilarityMatrix& matrix, const BreakpointSet& breaks,
                                         const PercentileTable& table);

/// Movements of one user: every pair of distinct locations they were seen at.
struct UserMovements {
  std::string user_id;
  std::size_t visited_locations = 0;
  std::vector<double> distances_km;
};

/// Per-user movements restricted to the locations that survived filtering.
/// `kept` maps filtered ids to ids of the registry the assignments refer to.
std::vector<UserMovements> user_movements(std::span<const Assignment> assignments,
                                          std::span<const LocationId> kept,
                                          const LocationRegistry& filtered_registry);

struct UserScaleProfile {
  std::string user_id;
  std::vector<int> contributed_scales;  // 1-based natural scale indices, ascending
  std::size_t visited_locations = 0;
  std::size_t movements = 0;
};

struct ScaleClassSummary {
  std::vector<int> scales;
  std::size_t users = 0;
  double mean_visited_locations = 0.0;
  double mean_movements = 0.0;
};

struct UserProfiles {
  std::vector<UserScaleProfile> users;     // users with at least one movement
  std::vector<ScaleClassSummary> classes;  // ordered by class size, then lexicographically
};

/// Class label such as "12" or "123"; indices are joined with '.' past 9 scales.
std::string scale_class_label(std::span<const int> scales, std::size_t scale_count);

/// Natural scale (1-based) containing the percentile scale of `distance_km`.
int natural_scale_of(double distance_km, std::span<const NaturalScale> scales, const PercentileTable& table);

UserProfiles user_profiles(std::span<const UserMovements> movements, std::span<const NaturalScale> scales,
                           const PercentileTable& table);

void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix& matrix);
/// 1 - similarity, min-max normalised to [0, 1] over the whole matrix.
void write_dissimilarity_csv(const std::filesystem::path& path, const SimilarityMatrix& matrix);

}  // namespace natscale
