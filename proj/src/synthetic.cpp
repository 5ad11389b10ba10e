#include "natscale/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "natscale/error.hpp"
#include "natscale/random.hpp"
#include "json.hpp"

namespace natscale {

namespace {

constexpr int kPlacementCandidates = 32;

// Point at great-circle distance `dist_km` from `from` along `bearing` (radians).
LatLon destination(const LatLon& from, double bearing, double dist_km) {
  const double delta = dist_km / kEarthRadiusKm;
  const double phi1 = deg2rad(from.lat);
  const double lambda1 = deg2rad(from.lon);
  const double sin_phi2 = std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(bearing);
  const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
  const double lambda2 = lambda1 + std::atan2(std::sin(bearing) * std::sin(delta) * std::cos(phi1),
                                              std::cos(delta) - std::sin(phi1) * sin_phi2);
  double lon = rad2deg(lambda2);
  if (lon > 180.0) lon -= 360.0;
  if (lon < -180.0) lon += 360.0;
  return {rad2deg(phi2), lon};
}

// Uniform point in the spherical cap of radius `radius_km` (area-uniform for small caps).
LatLon uniform_in_disc(Rng& rng, const LatLon& center, double radius_km) {
  const double bearing = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double dist = radius_km * std::sqrt(uniform01(rng));
  return destination(center, bearing, dist);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (levels.empty()) throw config_error("synthetic spec needs at least one level");
  if (mixing.size() != levels.size()) throw config_error("mixing needs one probability per level");
  double sum = 0.0;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (!(levels[l].radius_km > 0.0)) throw config_error("level radii must be > 0");
    if (l > 0 && !(levels[l].radius_km > levels[l - 1].radius_km))
      throw config_error("level radii must be strictly increasing");
    if (levels[l].cluster_count < 1) throw config_error("cluster counts must be >= 1");
    if (l > 0 && levels[l].cluster_count > levels[l - 1].cluster_count)
      throw config_error("cluster counts cannot grow with the level");
    if (!(mixing[l] >= 0.0)) throw config_error("mixing probabilities must be >= 0");
    sum += mixing[l];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw config_error(fmt::format("mixing probabilities sum to {}, not 1", sum));
  if (users == 0 || movements_per_user == 0) throw config_error("users and movements_per_user must be >= 1");
  if (!(activity_spread >= 0.0 && activity_spread < 1.0)) throw config_error("activity_spread must lie in [0, 1)");
  if (locations < 3) throw config_error("at least 3 locations required");
  if (region_radius_km < 0.0) throw config_error("region_radius_km must be >= 0");
  if (center.lat < -90.0 || center.lat > 90.0 || center.lon < -180.0 || center.lon > 180.0)
    throw config_error("center outside lat/lon range");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t L = spec.levels.size();
  SyntheticData data;

  // Cluster centres, top level first. parent[l][c] is the level l+1 cluster of cluster c.
  // Each centre is the best of kPlacementCandidates draws, uniform within the parent disc
  // (shrunk so the child disc fits): the draw farthest from centres already placed at the
  // same level. This spreads clusters evenly instead of letting them overlap.
  Rng place(derive_seed(spec.seed, "synthetic.centers"));
  data.centers.assign(L, {});
  std::vector<std::vector<int>> parent(L);
  const double region = spec.region_radius_km > 0.0 ? spec.region_radius_km : 2.0 * spec.levels.back().radius_km;
  for (std::size_t l = L; l-- > 0;) {
    const int count = spec.levels[l].cluster_count;
    const double r = spec.levels[l].radius_km;
    for (int c = 0; c < count; ++c) {
      LatLon around = spec.center;
      double spread = region;
      if (l + 1 < L) {
        const int p = c % spec.levels[l + 1].cluster_count;
        parent[l].push_back(p);
        around = data.centers[l + 1][static_cast<std::size_t>(p)];
        spread = spec.levels[l + 1].radius_km;
      }
      spread = std::max(spread - r, 0.0);
      LatLon best{};
      double best_gap = -1.0;
      for (int k = 0; k < kPlacementCandidates; ++k) {
        const LatLon candidate = uniform_in_disc(place, around, spread);
        double gap = std::numeric_limits<double>::infinity();
        for (const auto& other : data.centers[l]) gap = std::min(gap, haversine_km(candidate, other));
        if (gap > best_gap) {
          best_gap = gap;
          best = candidate;
        }
      }
      data.centers[l].push_back(best);
    }
  }
  auto ancestor = [&](int cluster0, std::size_t level) {
    int c = cluster0;
    for (std::size_t l = 0; l < level; ++l) c = parent[l][static_cast<std::size_t>(c)];
    return c;
  };

  // Locations inside level-0 clusters, round-robin.
  Rng seeds(derive_seed(spec.seed, "synthetic.locations"));
  const int c0 = spec.levels[0].cluster_count;
  std::vector<Location> locs;
  for (std::size_t i = 0; i < spec.locations; ++i) {
    const int cluster = static_cast<int>(i % static_cast<std::size_t>(c0));
    const LatLon p = uniform_in_disc(seeds, data.centers[0][static_cast<std::size_t>(cluster)], spec.levels[0].radius_km);
    locs.push_back({p, fmt::format("loc_{}", i), static_cast<std::int64_t>(i)});
    std::vector<int> chain;
    for (std::size_t l = 0; l < L; ++l) chain.push_back(ancestor(cluster, l));
    data.location_clusters.push_back(std::move(chain));
  }
  data.locations = LocationRegistry(std::move(locs));

  Rng users(derive_seed(spec.seed, "synthetic.users"));
  const auto mean = static_cast<double>(spec.movements_per_user);
  const auto lo = static_cast<std::size_t>(std::max(1.0, std::round(mean * (1.0 - spec.activity_spread))));
  const auto hi = static_cast<std::size_t>(std::max(static_cast<double>(lo), std::round(mean * (1.0 + spec.activity_spread))));
  for (std::size_t u = 0; u < spec.users; ++u) {
    SyntheticUser user;
    user.user_id = fmt::format("u{:05d}", u);
    user.home_cluster = static_cast<int>(uniform_index(users, static_cast<std::uint64_t>(c0)));
    user.events = lo + static_cast<std::size_t>(uniform_index(users, hi - lo + 1));
    std::vector<bool> used(L, false);
    for (std::size_t k = 0; k < user.events; ++k) {
      const std::size_t level = sample_discrete(users, spec.mixing);
      used[level] = true;
      const auto& center = data.centers[level][static_cast<std::size_t>(ancestor(user.home_cluster, level))];
      const LatLon p = uniform_in_disc(users, center, spec.levels[level].radius_km);
      const std::int64_t ts = 1'500'000'000 + static_cast<std::int64_t>(u) * 100'000 + static_cast<std::int64_t>(k) * 600;
      data.events.push_back({user.user_id, p, ts});
    }
    for (std::size_t l = 0; l < L; ++l)
      if (used[l]) user.levels_sampled.push_back(static_cast<int>(l));
    data.users.push_back(std::move(user));
  }
  return data;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticSpec& spec, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "events.csv", std::ios::binary);
    if (!out) throw input_error(fmt::format("cannot write '{}'", (dir / "events.csv").string()));
    out << "user_id,lat,lon,timestamp\n";
    for (const auto& e : data.events)
      out << fmt::format("{},{:.7f},{:.7f},{}\n", e.user_id, e.position.lat, e.position.lon, e.timestamp);
  }
  write_locations(dir / "locations.csv", data.locations);

  nlohmann::ordered_json truth;
  truth["seed"] = spec.seed;
  truth["users"] = spec.users;
  truth["movements_per_user"] = spec.movements_per_user;
  truth["activity_spread"] = spec.activity_spread;
  truth["mixing"] = spec.mixing;
  auto& levels = truth["levels"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    nlohmann::ordered_json centers = nlohmann::ordered_json::array();
    for (const auto& c : data.centers[l]) centers.push_back({c.lat, c.lon});
    levels.push_back({{"radius_km", spec.levels[l].radius_km},
                      {"cluster_count", spec.levels[l].cluster_count},
                      {"centers", std::move(centers)}});
  }
  auto& members = truth["location_clusters"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < data.location_clusters.size(); ++i)
    members.push_back({{"location_id", data.locations[static_cast<LocationId>(i)].source_id},
                       {"clusters", data.location_clusters[i]}});
  auto& users = truth["user_classes"] = nlohmann::ordered_json::array();
  for (const auto& u : data.users)
    users.push_back({{"user_id", u.user_id},
                     {"home_cluster", u.home_cluster},
                     {"events", u.events},
                     {"levels", u.levels_sampled}});

  std::ofstream out(dir / "ground_truth.json", std::ios::binary);
  if (!out) throw input_error(fmt::format("cannot write '{}'", (dir / "ground_truth.json").string()));
  out << truth.dump(2) << '\n';
}

}  // namespace natscale
