#include "natscale/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "natscale/error.hpp"

namespace natscale {

namespace {

struct TaggedVertex {
  Point2 p;
  LocationId tag;  // neighbour across the edge starting at p
};

// Keeps the side of the bisector nearer to `self`. New edges along the cut get `other`.
std::vector<TaggedVertex> clip_by_bisector(const std::vector<TaggedVertex>& poly, const Point2& self,
                                           const Point2& other, LocationId other_id) {
  const Point2 d = other - self;
  const double c = dot((self + other) * 0.5, d);
  auto f = [&](const Point2& p) { return dot(p, d) - c; };

  std::vector<TaggedVertex> out;
  out.reserve(poly.size() + 2);
  const std::size_t n = poly.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& cur = poly[k];
    const auto& nxt = poly[(k + 1) % n];
    const double fc = f(cur.p);
    const double fn = f(nxt.p);
    const bool cur_in = fc <= 0.0;
    const bool nxt_in = fn <= 0.0;
    if (cur_in) out.push_back(cur);
    if (cur_in != nxt_in) {
      const double t = fc / (fc - fn);
      const Point2 x = cur.p + (nxt.p - cur.p) * t;
      out.push_back({x, cur_in ? other_id : cur.tag});
    }
  }
  return out;
}

// Drops near-zero edges and merges consecutive collinear edges that share a neighbour.
// Box sides share one tag, so collinearity keeps the box corners.
void clean_polygon(std::vector<TaggedVertex>& poly, double eps) {
  bool changed = true;
  while (changed && poly.size() > 2) {
    changed = false;
    for (std::size_t k = 0; k < poly.size() && poly.size() > 2; ++k) {
      const auto& nxt = poly[(k + 1) % poly.size()];
      if (std::sqrt(norm2(nxt.p - poly[k].p)) <= eps) {
        poly.erase(poly.begin() + static_cast<std::ptrdiff_t>(k));
        changed = true;
        break;
      }
    }
  }
  for (std::size_t k = 0; poly.size() > 3 && k < poly.size();) {
    const std::size_t prev = (k + poly.size() - 1) % poly.size();
    const Point2& a = poly[prev].p;
    const Point2& b = poly[k].p;
    const Point2& c = poly[(k + 1) % poly.size()].p;
    const double span = std::sqrt(norm2(c - a));
    const bool collinear = span > 0.0 && std::abs(cross(b - a, c - a)) / span <= eps;
    if (poly[prev].tag == poly[k].tag && (poly[k].tag != kBoxSide || collinear)) {
      poly.erase(poly.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      ++k;
    }
  }
}

double max_radius2(const std::vector<TaggedVertex>& poly, const Point2& center) {
  double r2 = 0.0;
  for (const auto& v : poly) r2 = std::max(r2, norm2(v.p - center));
  return r2;
}

// Uniform bucket grid over the seeds for ring-ordered neighbour scans.
struct SeedGrid {
  Point2 origin;
  double h = 1.0;
  long nx = 1, ny = 1;
  std::vector<std::vector<LocationId>> buckets;

  SeedGrid(std::span<const Point2> seeds, const BoundingBox& box) {
    origin = box.min;
    const double area = std::max(box.width() * box.height(), 1e-300);
    h = std::sqrt(area / static_cast<double>(seeds.size()));
    if (!(h > 0.0)) h = std::max(box.width(), box.height());
    nx = std::max(1L, static_cast<long>(std::ceil(box.width() / h)) + 1);
    ny = std::max(1L, static_cast<long>(std::ceil(box.height() / h)) + 1);
    buckets.resize(static_cast<std::size_t>(nx * ny));
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      auto [bx, by] = bucket_of(seeds[i]);
      buckets[static_cast<std::size_t>(by * nx + bx)].push_back(static_cast<LocationId>(i));
    }
  }

  std::pair<long, long> bucket_of(const Point2& p) const {
    long bx = static_cast<long>(std::floor((p.x - origin.x) / h));
    long by = static_cast<long>(std::floor((p.y - origin.y) / h));
    return {std::clamp(bx, 0L, nx - 1), std::clamp(by, 0L, ny - 1)};
  }

  // Visits buckets at Chebyshev distance exactly r from (bx, by).
  template <typename Fn>
  void ring(long bx, long by, long r, Fn&& fn) const {
    auto visit = [&](long x, long y) {
      if (x >= 0 && x < nx && y >= 0 && y < ny)
        for (LocationId id : buckets[static_cast<std::size_t>(y * nx + x)]) fn(id);
    };
    if (r == 0) {
      visit(bx, by);
      return;
    }
    for (long x = bx - r; x <= bx + r; ++x) {
      visit(x, by - r);
      visit(x, by + r);
    }
    for (long y = by - r + 1; y <= by + r - 1; ++y) {
      visit(bx - r, y);
      visit(bx + r, y);
    }
  }
};

}  // namespace

double VoronoiCell::area() const {
  double a = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i)
    a += cross(vertices[i], vertices[(i + 1) % vertices.size()]);
  return a / 2.0;
}

VoronoiDiagram build_voronoi(const LocationRegistry& registry, double bbox_margin) {
  const std::size_t n = registry.size();
  if (n < 3) throw stage_error("build_voronoi", fmt::format("{} seeds given, at least 3 required", n));
  if (!(bbox_margin >= 0.0)) throw config_error("bbox_margin must be >= 0");

  VoronoiDiagram vd;
  LatLon centroid{0.0, 0.0};
  for (const auto& loc : registry.locations()) {
    centroid.lat += loc.position.lat;
    centroid.lon += loc.position.lon;
  }
  centroid.lat /= static_cast<double>(n);
  centroid.lon /= static_cast<double>(n);
  vd.projection_ = Equirectangular(centroid);

  vd.seeds_.reserve(n);
  for (const auto& loc : registry.locations()) vd.seeds_.push_back(vd.projection_.project(loc.position));

  // Collinearity: distance of every seed from the line through seed 0 and the seed farthest from it.
  {
    const Point2& a = vd.seeds_[0];
    std::size_t far = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (norm2(vd.seeds_[i] - a) > norm2(vd.seeds_[far] - a)) far = i;
    const Point2 dir = vd.seeds_[far] - a;
    const double len = std::sqrt(norm2(dir));
    double off = 0.0;
    if (len > 0.0)
      for (const auto& s : vd.seeds_) off = std::max(off, std::abs(cross(dir, s - a)) / len);
    if (off <= kCollinearTolerance) throw stage_error("build_voronoi", "all seeds are collinear");
  }

  BoundingBox seeds_box{vd.seeds_[0], vd.seeds_[0]};
  for (const auto& s : vd.seeds_) {
    seeds_box.min = {std::min(seeds_box.min.x, s.x), std::min(seeds_box.min.y, s.y)};
    seeds_box.max = {std::max(seeds_box.max.x, s.x), std::max(seeds_box.max.y, s.y)};
  }
  const double mx = bbox_margin * seeds_box.width();
  const double my = bbox_margin * seeds_box.height();
  vd.bbox_ = {{seeds_box.min.x - mx, seeds_box.min.y - my}, {seeds_box.max.x + mx, seeds_box.max.y + my}};

  const double diag = std::sqrt(norm2(vd.bbox_.max - vd.bbox_.min));
  const double merge_eps = 1e-12 * diag;
  const SeedGrid grid(vd.seeds_, seeds_box);

  vd.cells_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& s = vd.seeds_[i];
    std::vector<TaggedVertex> poly = {{vd.bbox_.min, kBoxSide},
                                      {{vd.bbox_.max.x, vd.bbox_.min.y}, kBoxSide},
                                      {vd.bbox_.max, kBoxSide},
                                      {{vd.bbox_.min.x, vd.bbox_.max.y}, kBoxSide}};
    auto [bx, by] = grid.bucket_of(s);
    const long max_ring = std::max(grid.nx, grid.ny);
    for (long r = 0; r <= max_ring; ++r) {
      grid.ring(bx, by, r, [&](LocationId j) {
        if (static_cast<std::size_t>(j) == i) return;
        const Point2& t = vd.seeds_[static_cast<std::size_t>(j)];
        // A seed farther than twice the cell radius cannot cut the cell.
        if (norm2(t - s) > 4.0 * max_radius2(poly, s)) return;
        poly = clip_by_bisector(poly, s, t, j);
      });
      // Unvisited seeds are at least r * h away.
      const double reach = static_cast<double>(r) * grid.h;
      if (reach * reach > 4.0 * max_radius2(poly, s)) break;
    }
    clean_polygon(poly, merge_eps);

    auto& cell = vd.cells_[i];
    for (const auto& v : poly) {
      cell.vertices.push_back(v.p);
      cell.edge_neighbor.push_back(v.tag);
    }
  }

  // Adjacency: union over both sides of edges longer than the tolerance.
  const double adj_eps = 1e-9 * diag;
  std::vector<std::pair<LocationId, LocationId>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cell = vd.cells_[i];
    for (std::size_t k = 0; k < cell.vertices.size(); ++k) {
      const LocationId j = cell.edge_neighbor[k];
      if (j == kBoxSide) continue;
      const Point2& p = cell.vertices[k];
      const Point2& q = cell.vertices[(k + 1) % cell.vertices.size()];
      if (std::sqrt(norm2(q - p)) <= adj_eps) continue;
      const auto a = static_cast<LocationId>(i);
      pairs.emplace_back(std::min(a, j), std::max(a, j));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  vd.adjacency_ = std::move(pairs);
  vd.neighbors_.assign(n, {});
  for (const auto& [a, b] : vd.adjacency_) {
    vd.neighbors_[static_cast<std::size_t>(a)].push_back(b);
    vd.neighbors_[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& nb : vd.neighbors_) std::sort(nb.begin(), nb.end());
  return vd;
}

LocationId VoronoiDiagram::locate(const Point2& p) const {
  LocationId cur = 0;
  double best = norm2(seeds_[0] - p);
  while (true) {
    LocationId next = cur;
    for (LocationId j : neighbors(cur)) {
      const double d = norm2(seed(j) - p);
      if (d < best) {
        best = d;
        next = j;
      }
    }
    if (next == cur) return cur;
    cur = next;
  }
}

bool VoronoiDiagram::cell_contains(LocationId id, const Point2& p, double tolerance) const {
  const auto& v = cell(id).vertices;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const Point2& a = v[k];
    const Point2& b = v[(k + 1) % v.size()];
    const Point2 e = b - a;
    const double len = std::sqrt(norm2(e));
    if (len == 0.0) continue;
    if (cross(e, p - a) / len < -tolerance) return false;
  }
  return true;
}

std::optional<std::pair<Point2, Point2>> VoronoiDiagram::shared_edge(LocationId a, LocationId b) const {
  auto find = [&](LocationId from, LocationId to) -> std::optional<std::pair<Point2, Point2>> {
    const auto& c = cell(from);
    std::optional<std::pair<Point2, Point2>> best;
    double best_len = -1.0;
    for (std::size_t k = 0; k < c.vertices.size(); ++k) {
      if (c.edge_neighbor[k] != to) continue;
      const Point2& p = c.vertices[k];
      const Point2& q = c.vertices[(k + 1) % c.vertices.size()];
      const double len = norm2(q - p);
      if (len > best_len) {
        best_len = len;
        best = std::make_pair(p, q);
      }
    }
    return best;
  };
  if (auto e = find(a, b)) return e;
  if (auto e = find(b, a)) return std::make_pair(e->second, e->first);
  return std::nullopt;
}

namespace {

// One synchronous majority pass. Returns the number of cells that changed.
std::size_t majority_pass(const std::vector<Label>& current, std::vector<Label>& next, const VoronoiDiagram& vd) {
  std::size_t changes = 0;
  std::vector<std::pair<Label, int>> counts;
  for (std::size_t i = 0; i < current.size(); ++i) {
    const auto nb = vd.neighbors(static_cast<LocationId>(i));
    counts.clear();
    auto bump = [&](Label l) {
      for (auto& [label, count] : counts)
        if (label == l) {
          ++count;
          return;
        }
      counts.emplace_back(l, 1);
    };
    bump(current[i]);
    for (LocationId j : nb) bump(current[static_cast<std::size_t>(j)]);

    const int size = static_cast<int>(nb.size()) + 1;
    next[i] = current[i];
    for (const auto& [label, count] : counts) {
      if (2 * count > size) {
        if (label != current[i]) {
          next[i] = label;
          ++changes;
        }
        break;
      }
    }
  }
  return changes;
}

struct MajorityOutcome {
  std::vector<Label> labels;
  bool converged = false;
  int iterations = 0;
};

MajorityOutcome run_majority(std::vector<Label> labels, const VoronoiDiagram& vd, int max_iters) {
  MajorityOutcome out;
  std::vector<Label> next(labels.size());
  while (true) {
    if (out.iterations >= max_iters) {
      // Report convergence only if the cap was hit exactly at a fixpoint.
      out.converged = majority_pass(labels, next, vd) == 0;
      break;
    }
    if (majority_pass(labels, next, vd) == 0) {
      out.converged = true;
      break;
    }
    labels.swap(next);
    ++out.iterations;
  }
  out.labels = std::move(labels);
  return out;
}

}  // namespace

SmoothResult smooth(const Partition& partition, const VoronoiDiagram& diagram, int max_iters) {
  if (partition.size() != diagram.size())
    throw stage_error("smooth", fmt::format("partition has {} labels for {} cells", partition.size(), diagram.size()));
  if (max_iters < 0) throw config_error("max_smooth_iters must be >= 0");

  auto outcome = run_majority(partition.labels, diagram, max_iters);
  SmoothResult res;
  res.partition = Partition::from_labels(outcome.labels);
  res.partition.source_scale = partition.source_scale;
  res.converged = outcome.converged;
  res.iterations = outcome.iterations;
  return res;
}

MultiscaleResult smooth_multiscale(std::span<const Partition> partitions, const VoronoiDiagram& diagram,
                                   int max_iters) {
  if (partitions.empty()) throw stage_error("smooth_multiscale", "no partitions given");
  for (const auto& p : partitions)
    if (p.size() != diagram.size()) throw stage_error("smooth_multiscale", "partitions do not match the diagram");
  if (max_iters < 0) throw config_error("max_smooth_iters must be >= 0");

  // Each distinct tuple becomes one voting value.
  const std::size_t n = diagram.size();
  std::map<ScaleTuple, Label> ids;
  std::vector<ScaleTuple> values;
  std::vector<Label> encoded(n);
  for (std::size_t i = 0; i < n; ++i) {
    ScaleTuple t;
    t.reserve(partitions.size());
    for (const auto& p : partitions) t.push_back(p.labels[i]);
    auto [it, inserted] = ids.try_emplace(t, static_cast<Label>(values.size()));
    if (inserted) values.push_back(std::move(t));
    encoded[i] = it->second;
  }

  auto outcome = run_majority(std::move(encoded), diagram, max_iters);
  MultiscaleResult res;
  res.converged = outcome.converged;
  res.iterations = outcome.iterations;
  res.tuples.reserve(n);
  for (Label l : outcome.labels) res.tuples.push_back(values[static_cast<std::size_t>(l)]);
  return res;
}

std::vector<BoundarySegment> extract_boundaries(std::span<const ScaleTuple> labels, const VoronoiDiagram& diagram) {
  if (labels.size() != diagram.size()) throw stage_error("extract_boundaries", "labels do not cover every cell");
  std::vector<BoundarySegment> out;
  for (const auto& [a, b] : diagram.adjacency()) {
    const auto& ta = labels[static_cast<std::size_t>(a)];
    const auto& tb = labels[static_cast<std::size_t>(b)];
    if (ta.size() != tb.size()) throw stage_error("extract_boundaries", "tuples of different lengths");
    std::vector<int> differ;
    for (std::size_t k = 0; k < ta.size(); ++k)
      if (ta[k] != tb[k]) differ.push_back(static_cast<int>(k) + 1);
    if (differ.empty()) continue;
    auto edge = diagram.shared_edge(a, b);
    if (!edge) continue;
    out.push_back({a, b, diagram.projection().unproject(edge->first), diagram.projection().unproject(edge->second),
                   std::move(differ)});
  }
  return out;
}

std::vector<BoundarySegment> extract_boundaries(const Partition& partition, const VoronoiDiagram& diagram) {
  std::vector<ScaleTuple> tuples;
  tuples.reserve(partition.size());
  for (Label l : partition.labels) tuples.push_back({l});
  return extract_boundaries(tuples, diagram);
}

double total_length_km(std::span<const BoundarySegment> segments, const VoronoiDiagram& diagram) {
  double total = 0.0;
  for (const auto& s : segments)
    total += std::sqrt(norm2(diagram.projection().project(s.to) - diagram.projection().project(s.from)));
  return total;
}

}  // namespace natscale
