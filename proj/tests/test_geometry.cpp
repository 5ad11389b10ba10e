#include <set>

#include "doctest.h"
#include "natscale/error.hpp"
#include "natscale/geometry.hpp"
#include "support.hpp"

using namespace natscale;
using namespace natscale::testing;

namespace {

using AdjacencyList = std::vector<std::pair<LocationId, LocationId>>;

LocationId brute_nearest(const VoronoiDiagram& d, const Point2& p) {
  LocationId best = 0;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (norm2(d.seed(static_cast<LocationId>(i)) - p) < norm2(d.seed(best) - p)) best = static_cast<LocationId>(i);
  return best;
}

// Distance from p to the bisector of its nearest and second-nearest seeds.
double bisector_gap(const VoronoiDiagram& d, const Point2& p) {
  std::vector<double> dist(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) dist[i] = std::sqrt(norm2(d.seed(static_cast<LocationId>(i)) - p));
  std::partial_sort(dist.begin(), dist.begin() + 2, dist.end());
  return (dist[1] - dist[0]) / 2.0;
}

std::vector<Point2> grid_points(int side, double spacing) {
  std::vector<Point2> points;
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) points.push_back({c * spacing, r * spacing});
  return points;
}

std::set<Label> distinct(const std::vector<Label>& labels) { return {labels.begin(), labels.end()}; }

Point2 plane(const VoronoiDiagram& d, const LatLon& p) { return d.projection().project(p); }

}  // namespace

TEST_CASE("unit square corners are adjacent along the sides only") {
  const auto d = build_voronoi(plane_registry({{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
  CHECK(d.adjacency() == AdjacencyList{{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  double area = 0.0;
  for (LocationId i = 0; i < 4; ++i) area += d.cell(i).area();
  CHECK(area == doctest::Approx(d.bbox().width() * d.bbox().height()));
}

TEST_CASE("voronoi refuses degenerate seed sets") {
  CHECK_THROWS_AS(build_voronoi(plane_registry({{0, 0}, {1, 0}})), Error);
  CHECK_THROWS_AS(build_voronoi(plane_registry({{0, 0}, {1, 1}, {2, 2}, {3, 3}})), Error);
}

TEST_CASE("sampled points fall in the nearest seed's cell") {
  Rng rng(12);
  const auto d = build_voronoi(random_plane_registry(rng, 300, 50.0));
  const auto& box = d.bbox();
  int checked = 0;
  for (int i = 0; i < 20000; ++i) {
    const Point2 p{uniform(rng, box.min.x, box.max.x), uniform(rng, box.min.y, box.max.y)};
    if (bisector_gap(d, p) <= 1e-9) continue;
    const auto nearest = brute_nearest(d, p);
    CHECK(d.locate(p) == nearest);
    CHECK(d.cell_contains(nearest, p));
    ++checked;
  }
  CHECK(checked > 19000);
}

TEST_CASE("cells are convex and neighbour lists match shared edges") {
  Rng rng(5);
  const auto d = build_voronoi(random_plane_registry(rng, 120, 30.0));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& cell = d.cell(static_cast<LocationId>(i));
    REQUIRE(cell.vertices.size() >= 3);
    CHECK(cell.area() > 0.0);
    for (std::size_t k = 0; k < cell.vertices.size(); ++k) {
      const auto& a = cell.vertices[k];
      const auto& b = cell.vertices[(k + 1) % cell.vertices.size()];
      const auto& c = cell.vertices[(k + 2) % cell.vertices.size()];
      CHECK(cross(b - a, c - b) >= -1e-9);
    }
  }
  double area = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) area += d.cell(static_cast<LocationId>(i)).area();
  CHECK(area == doctest::Approx(d.bbox().width() * d.bbox().height()).epsilon(1e-9));
  for (const auto& [a, b] : d.adjacency()) {
    const auto edge = d.shared_edge(a, b);
    REQUIRE(edge.has_value());
    // Both endpoints are equidistant from the two seeds.
    for (const auto& p : {edge->first, edge->second})
      CHECK(std::abs(std::sqrt(norm2(p - d.seed(a))) - std::sqrt(norm2(p - d.seed(b)))) <= 1e-7);
    const auto nb = d.neighbors(a);
    CHECK(std::find(nb.begin(), nb.end(), b) != nb.end());
  }
}

TEST_CASE("a lone cell among five others flips in one pass") {
  // Centre cell with five neighbours on a pentagon.
  std::vector<Point2> points{{0, 0}};
  for (int k = 0; k < 5; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 5.0;
    points.push_back({std::cos(a), std::sin(a)});
  }
  const auto d = build_voronoi(plane_registry(points));
  REQUIRE(d.neighbors(0).size() == 5);
  const auto result = smooth(Partition::from_labels(std::vector<Label>{0, 1, 1, 1, 1, 1}), d);
  CHECK(result.converged);
  CHECK(result.iterations == 1);
  CHECK(result.partition.n_communities == 1);
}

TEST_CASE("uniform labels are a fixpoint") {
  Rng rng(2);
  const auto d = build_voronoi(random_plane_registry(rng, 50, 10.0));
  const auto result = smooth(Partition::from_labels(std::vector<Label>(50, 4)), d);
  CHECK(result.converged);
  CHECK(result.iterations == 0);
  CHECK(result.partition.labels == std::vector<Label>(50, 0));
  CHECK(extract_boundaries(result.partition, d).empty());
}

TEST_CASE("smoothing random labels on a grid reaches a fixpoint") {
  const auto d = build_voronoi(plane_registry(grid_points(10, 1.0)));
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto input = Partition::from_labels(random_labels(rng, 100, 2 + static_cast<std::size_t>(trial % 4)));
    const auto result = smooth(input, d);
    if (!result.converged) continue;
    CHECK(cells_with_differing_majority(result.partition.labels, d).empty());
    CHECK(result.partition.is_dense());
    CHECK(distinct(result.partition.labels).size() <= distinct(input.labels).size());
    const auto again = smooth(result.partition, d);
    CHECK(again.iterations == 0);
    CHECK(again.partition.labels == result.partition.labels);
  }
}

TEST_CASE("iteration cap sets the warning flag") {
  Rng rng(9);
  const auto d = build_voronoi(random_plane_registry(rng, 100, 10.0));
  const auto input = Partition::from_labels(random_labels(rng, 100, 2));
  const auto full = smooth(input, d);
  REQUIRE(full.iterations >= 1);
  const auto capped = smooth(input, d, 0);
  CHECK_FALSE(capped.converged);
  CHECK(capped.partition.labels == input.labels);
}

TEST_CASE("multiscale smoothing votes on whole tuples") {
  // Hexagonal neighbourhood: centre plus a ring of six.
  std::vector<Point2> points{{0, 0}};
  for (int k = 0; k < 6; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 6.0;
    points.push_back({std::cos(a), std::sin(a)});
  }
  const auto d = build_voronoi(plane_registry(points));
  REQUIRE(d.neighbors(0).size() == 6);
  // Labels are densified by first appearance: the centre carries the unique tuple (0, 0),
  // ring cell 4 carries (1, 0) and the rest of the ring (1, 1).
  const std::vector<Partition> scales{Partition::from_labels(std::vector<Label>{0, 1, 1, 1, 1, 1, 1}),
                                      Partition::from_labels(std::vector<Label>{0, 1, 1, 1, 0, 1, 1})};
  const auto one_pass = smooth_multiscale(scales, d, 1);
  CHECK(one_pass.tuples[0] == ScaleTuple{1, 1});
  CHECK(one_pass.tuples[4] == ScaleTuple{1, 0});  // no strict majority in a 4-cell neighbourhood yet
  const auto full = smooth_multiscale(scales, d);
  CHECK(full.converged);
  CHECK(full.tuples == std::vector<ScaleTuple>(7, ScaleTuple{1, 1}));
}

TEST_CASE("multiscale smoothing reduces to single-scale smoothing") {
  Rng rng(44);
  const auto d = build_voronoi(random_plane_registry(rng, 80, 20.0));
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = Partition::from_labels(random_labels(rng, 80, 3));
    const auto single = smooth(p, d);
    const std::vector<Partition> one{p};
    const auto tuples = smooth_multiscale(one, d);
    CHECK(tuples.converged == single.converged);
    std::vector<Label> flat;
    for (const auto& t : tuples.tuples) flat.push_back(t.at(0));
    CHECK(Partition::from_labels(flat).labels == single.partition.labels);
    // Identical partitions at every scale behave like one.
    const std::vector<Partition> same{p, p, p};
    const auto repeated = smooth_multiscale(same, d);
    for (std::size_t i = 0; i < flat.size(); ++i)
      CHECK(repeated.tuples[i] == ScaleTuple{flat[i], flat[i], flat[i]});
  }
}

TEST_CASE("square split into left and right pairs has a vertical boundary") {
  const auto d = build_voronoi(plane_registry({{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
  const auto segments = extract_boundaries(Partition::from_labels(std::vector<Label>{0, 1, 0, 1}), d);
  REQUIRE(segments.size() == 2);
  double y_min = 1e9;
  double y_max = -1e9;
  for (const auto& s : segments) {
    CHECK(s.scales == std::vector<int>{1});
    for (const auto& end : {plane(d, s.from), plane(d, s.to)}) {
      CHECK(end.x == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
      y_min = std::min(y_min, end.y);
      y_max = std::max(y_max, end.y);
    }
  }
  CHECK(y_min == doctest::Approx(d.bbox().min.y));
  CHECK(y_max == doctest::Approx(d.bbox().max.y));
  CHECK(total_length_km(segments, d) == doctest::Approx(d.bbox().height()));
}

TEST_CASE("tuple boundaries are tagged with the differing scales") {
  const auto d = build_voronoi(plane_registry({{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
  const std::vector<ScaleTuple> tuples{{0, 0, 0}, {0, 1, 0}, {0, 0, 0}, {0, 0, 0}};
  const auto segments = extract_boundaries(tuples, d);
  REQUIRE(segments.size() == 2);
  for (const auto& s : segments) {
    CHECK(s.scales == std::vector<int>{2});
    CHECK((s.a == 1 || s.b == 1));
  }
  CHECK(extract_boundaries(std::vector<ScaleTuple>(4, ScaleTuple{3, 1, 2}), d).empty());
}

TEST_CASE("smoothing shortens noisy block boundaries") {
  const auto d = build_voronoi(plane_registry(grid_points(12, 1.0)));
  Rng rng(73);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Label> labels(144);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i % 12) < 6 ? 0 : 1;
    for (int flips = 0; flips < 12; ++flips) labels[uniform_index(rng, labels.size())] ^= 1;
    const auto noisy = Partition::from_labels(labels);
    const auto smoothed = smooth(noisy, d);
    const auto before = extract_boundaries(noisy, d);
    const auto after = extract_boundaries(smoothed.partition, d);
    CHECK(total_length_km(after, d) <= total_length_km(before, d) + 1e-9);
    for (const auto& s : after) {
      const auto edge = d.shared_edge(s.a, s.b);
      REQUIRE(edge.has_value());
      CHECK(std::sqrt(norm2(plane(d, s.from) - edge->first)) <= 1e-6);
      CHECK(std::sqrt(norm2(plane(d, s.to) - edge->second)) <= 1e-6);
    }
  }
}
