#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "natscale/geo.hpp"
#include "natscale/ingest.hpp"
#include "natscale/partition.hpp"

namespace natscale {

struct BoundingBox {
  Point2 min;
  Point2 max;

  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  bool contains(const Point2& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
  }
};

inline constexpr LocationId kBoxSide = -1;

/// Convex cell polygon, counter-clockwise. Edge i runs from vertices[i] to
/// vertices[(i + 1) % n]; edge_neighbor[i] is the seed across it, or kBoxSide.
struct VoronoiCell {
  std::vector<Point2> vertices;
  std::vector<LocationId> edge_neighbor;

  double area() const;
};

/// Voronoi tessellation of the registry seeds in an equirectangular plane centred on
/// the seed centroid, clipped to the seed bounding box grown by a margin.
class VoronoiDiagram {
 public:
  const Equirectangular& projection() const { return projection_; }
  const BoundingBox& bbox() const { return bbox_; }
  std::size_t size() const { return seeds_.size(); }
  const Point2& seed(LocationId id) const { return seeds_[static_cast<std::size_t>(id)]; }
  const VoronoiCell& cell(LocationId id) const { return cells_[static_cast<std::size_t>(id)]; }
  /// Seeds whose cells share an edge of positive length with `id`, ascending.
  std::span<const LocationId> neighbors(LocationId id) const { return neighbors_[static_cast<std::size_t>(id)]; }
  /// All adjacent pairs (a < b), sorted.
  const std::vector<std::pair<LocationId, LocationId>>& adjacency() const { return adjacency_; }

  /// Seed whose cell contains `p`, found by a greedy walk over cell neighbours.
  LocationId locate(const Point2& p) const;
  /// Point-in-polygon test against the cell, inclusive within `tolerance` (plane units).
  bool cell_contains(LocationId id, const Point2& p, double tolerance = 1e-9) const;
  /// The edge separating two adjacent cells, in plane coordinates.
  std::optional<std::pair<Point2, Point2>> shared_edge(LocationId a, LocationId b) const;

 private:
  friend VoronoiDiagram build_voronoi(const LocationRegistry& registry, double bbox_margin);

  Equirectangular projection_;
  BoundingBox bbox_;
  std::vector<Point2> seeds_;
  std::vector<VoronoiCell> cells_;
  std::vector<std::vector<LocationId>> neighbors_;
  std::vector<std::pair<LocationId, LocationId>> adjacency_;
};

inline constexpr double kDefaultBoxMargin = 0.05;
inline constexpr double kCollinearTolerance = 1e-9;

/// Requires at least 3 seeds that are not all collinear; throws a stage error otherwise.
VoronoiDiagram build_voronoi(const LocationRegistry& registry, double bbox_margin = kDefaultBoxMargin);

using ScaleTuple = std::vector<Label>;

inline constexpr int kDefaultSmoothIterations = 100;

struct SmoothResult {
  Partition partition;
  bool converged = true;
  int iterations = 0;  // synchronous passes that changed at least one cell
};

/// Synchronous majority smoothing. A cell adopts the label held by a strict majority
/// of its neighbourhood (itself plus Voronoi neighbours) when it differs from its own.
/// Stops at a fixpoint or after `max_iters` passes (then converged = false).
SmoothResult smooth(const Partition& partition, const VoronoiDiagram& diagram,
                    int max_iters = kDefaultSmoothIterations);

struct MultiscaleResult {
  std::vector<ScaleTuple> tuples;  // one per cell
  bool converged = true;
  int iterations = 0;
};

/// Majority smoothing over per-cell tuples of labels (one label per partition), with
/// whole tuples as the voting values.
MultiscaleResult smooth_multiscale(std::span<const Partition> partitions, const VoronoiDiagram& diagram,
                                   int max_iters = kDefaultSmoothIterations);

struct BoundarySegment {
  LocationId a = 0;  // a < b
  LocationId b = 0;
  LatLon from;
  LatLon to;
  std::vector<int> scales;  // 1-based tuple positions where the two cells differ
};

/// Voronoi edges between adjacent cells with differing labels.
std::vector<BoundarySegment> extract_boundaries(std::span<const ScaleTuple> labels,
                                                const VoronoiDiagram& diagram);
std::vector<BoundarySegment> extract_boundaries(const Partition& partition, const VoronoiDiagram& diagram);

/// Plane length of a segment set, for comparisons between smoothing variants.
double total_length_km(std::span<const BoundarySegment> segments, const VoronoiDiagram& diagram);

}  // namespace natscale
