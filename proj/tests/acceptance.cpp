// Acceptance checks AC-1..AC-10. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails, except those named with --allow-fail.
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include <fmt/format.h>

#include "natscale/error.hpp"
#include "natscale/pipeline.hpp"
#include "support.hpp"

using namespace natscale;
using namespace natscale::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Fixed seed for the end-to-end criteria, chosen before any of them were run.
constexpr std::uint64_t kEndToEndSeed = 2026;

Outcome ac1_rand_oracle() {
  const auto start = Clock::now();
  Rng rng(101);
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    const auto n = 2 + static_cast<std::size_t>(uniform_index(rng, 49));
    const auto a = random_labels(rng, n, 1 + uniform_index(rng, 10));
    const auto b = random_labels(rng, n, 1 + uniform_index(rng, 10));
    if (rand_similarity(Partition::from_labels(a), Partition::from_labels(b)) != rand_oracle(a, b)) ++mismatches;
  }
  const double t = seconds_since(start);
  return {mismatches == 0 && t < 1.0, fmt::format("{} mismatches in 200 pairs, {:.3f} s (limit 1 s)", mismatches, t)};
}

Outcome ac2_modularity_oracle() {
  const auto start = Clock::now();
  Rng rng(202);
  double worst = 0.0;
  bool single_zero = true;
  int graphs = 0;
  while (graphs < 50) {
    const auto n = 2 + static_cast<std::size_t>(uniform_index(rng, 29));
    const auto g = random_graph(rng, n, 0.3);
    if (g.edges.empty()) continue;
    ++graphs;
    const auto labels = random_labels(rng, n, 1 + uniform_index(rng, 6));
    worst = std::max(worst, std::abs(modularity(g, Partition::from_labels(labels)) - modularity_oracle(g, labels)));
    if (modularity(g, Partition::from_labels(std::vector<Label>(n, 0))) != 0.0) single_zero = false;
  }
  const double t = seconds_since(start);
  return {worst <= 1e-12 && single_zero && t < 1.0,
          fmt::format("max |Q - oracle| = {:.2e} (tol 1e-12), single community Q = 0: {}, {:.3f} s (limit 1 s)", worst,
                      single_zero ? "yes" : "no", t)};
}

Outcome ac3_louvain_quality() {
  const auto start = Clock::now();
  int recovered = 0;
  int below_planted = 0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    Rng rng(derive_seed(303, "planted", k));
    std::vector<Label> truth;
    const auto g = planted_graph(rng, 32, 4, 0.9, 0.05, truth);
    const auto planted = Partition::from_labels(truth);
    const auto best = best_louvain(g, 100, derive_seed(303, "louvain", k));
    if (rand_similarity(best, planted) >= 0.95) ++recovered;
    if (best.quality < modularity(g, planted) - 1e-12) ++below_planted;
  }
  const double t = seconds_since(start);
  return {recovered >= 95 && below_planted == 0 && t < 30.0,
          fmt::format("Rand >= 0.95 in {}/100 (need 95), Q below planted in {} cases, {:.2f} s (limit 30 s)",
                      recovered, below_planted, t)};
}

Outcome ac4_breakpoint_oracle() {
  const auto start = Clock::now();
  Rng rng(404);
  int agree = 0;
  for (int i = 0; i < 20; ++i) {
    std::vector<int> ends;
    if (i % 2 == 0) {
      ends = {5 + static_cast<int>(uniform_index(rng, 91)), 100};
    } else {
      const int a = 5 + static_cast<int>(uniform_index(rng, 86));
      const int b = a + 5 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(91 - a)));
      if (b > 95) {
        --i;
        continue;
      }
      ends = {a, b, 100};
    }
    const auto m = block_matrix(rng, 100, ends, 0.9, 1.0, 0.0, 0.5);
    if (detect_breakpoints(m, 5).breakpoints == exhaustive_breakpoints(m, 5, 3)) ++agree;
  }
  const double t = seconds_since(start);
  return {agree == 20 && t < 10.0, fmt::format("greedy equals exhaustive on {}/20 matrices, {:.2f} s (limit 10 s)", agree, t)};
}

SyntheticSpec two_level_spec() {
  SyntheticSpec spec;
  spec.levels = {{5.0, 60}, {80.0, 3}};
  spec.mixing = {0.7, 0.3};
  spec.users = 500;
  spec.locations = 200;
  spec.region_radius_km = 600.0;
  spec.seed = kEndToEndSeed;
  return spec;
}

SyntheticSpec three_level_spec() {
  SyntheticSpec spec;
  spec.levels = {{5.0, 100}, {40.0, 20}, {300.0, 10}};
  spec.mixing = {0.6, 0.25, 0.15};
  spec.users = 500;
  spec.locations = 200;
  spec.region_radius_km = 2000.0;
  spec.seed = kEndToEndSeed;
  return spec;
}

std::filesystem::path work_root() {
  static const auto root = scratch_dir("acceptance");
  return root;
}

std::filesystem::path dataset(const std::string& name, const SyntheticSpec& spec) {
  const auto dir = work_root() / name;
  if (!std::filesystem::exists(dir / "events.csv")) write_synthetic(dir, spec, generate_synthetic(spec));
  return dir;
}

RunConfig end_to_end_config(const std::filesystem::path& data, const std::filesystem::path& out) {
  RunConfig config;
  config.events_path = data / "events.csv";
  config.locations_path = data / "locations.csv";
  config.rng_seed = kEndToEndSeed;
  config.output_dir = out;
  return config;
}

std::string describe_scales(const RunManifest& m) {
  std::string s = fmt::format("{} scales, thresholds", m.natural_scales.size());
  for (std::size_t k = 0; k + 1 < m.natural_scales.size(); ++k) s += fmt::format(" {:.1f}", m.natural_scales[k].threshold_km);
  return s + " km";
}

// Exactly levels.size() natural scales, the k-th threshold strictly inside
// (2 * radius_k, radius_{k+1}).
bool scales_bracketed(const RunManifest& m, const SyntheticSpec& spec) {
  if (m.natural_scales.size() != spec.levels.size()) return false;
  for (std::size_t k = 0; k + 1 < spec.levels.size(); ++k) {
    const double threshold = m.natural_scales[k].threshold_km;
    if (!(threshold > 2.0 * spec.levels[k].radius_km && threshold < spec.levels[k + 1].radius_km)) return false;
  }
  return true;
}

Outcome ac5_natural_scales() {
  const auto start = Clock::now();
  const auto two = run_pipeline(end_to_end_config(dataset("two_level", two_level_spec()), work_root() / "run_two"));
  const bool two_ok = scales_bracketed(two, two_level_spec());
  const auto three = run_pipeline(end_to_end_config(dataset("three_level", three_level_spec()), work_root() / "run_three"));
  const bool three_ok = scales_bracketed(three, three_level_spec());
  const double t = seconds_since(start);
  return {two_ok && three_ok && t < 300.0,
          fmt::format("5/80 km: {} [{}]; 5/40/300 km: {} [{}]; {:.1f} s (limit 300 s)", describe_scales(two),
                      two_ok ? "ok" : "wrong", describe_scales(three), three_ok ? "ok" : "wrong", t)};
}

Outcome ac6_voronoi() {
  const auto start = Clock::now();
  Rng rng(606);
  const auto d = build_voronoi(random_plane_registry(rng, 1000, 200.0));
  const auto& box = d.bbox();
  int mismatches = 0;
  int skipped = 0;
  std::vector<double> dist(d.size());
  for (int i = 0; i < 100000; ++i) {
    const Point2 p{uniform(rng, box.min.x, box.max.x), uniform(rng, box.min.y, box.max.y)};
    LocationId nearest = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      dist[j] = std::sqrt(norm2(d.seed(static_cast<LocationId>(j)) - p));
      if (dist[j] < dist[static_cast<std::size_t>(nearest)]) nearest = static_cast<LocationId>(j);
    }
    std::partial_sort(dist.begin(), dist.begin() + 2, dist.end());
    if ((dist[1] - dist[0]) / 2.0 <= 1e-9) {
      ++skipped;
      continue;
    }
    if (d.locate(p) != nearest || !d.cell_contains(nearest, p)) ++mismatches;
  }
  const double t = seconds_since(start);
  return {mismatches == 0 && t < 10.0,
          fmt::format("{} mismatches in 100000 points ({} on bisectors skipped), {:.2f} s (limit 10 s)", mismatches,
                      skipped, t)};
}

Outcome ac7_smoothing() {
  Rng rng(707);
  const auto d = build_voronoi(random_plane_registry(rng, 100, 50.0));
  int converged = 0;
  int flagged = 0;
  int violations = 0;
  for (int i = 0; i < 50; ++i) {
    const auto result = smooth(Partition::from_labels(random_labels(rng, 100, 2 + uniform_index(rng, 5))), d, 100);
    if (!result.converged) {
      ++flagged;
      continue;
    }
    ++converged;
    if (!cells_with_differing_majority(result.partition.labels, d).empty()) ++violations;
  }
  return {violations == 0 && converged + flagged == 50,
          fmt::format("{} converged with {} fixpoint violations, {} flagged as not converged", converged, violations,
                      flagged)};
}

Outcome ac8_bipartition() {
  Rng rng(808);
  int above_input = 0;
  int exhaustive_checked = 0;
  int exhaustive_mismatch = 0;
  int graphs = 0;
  while (graphs < 20) {
    const auto n = 12 + static_cast<std::size_t>(uniform_index(rng, 30));
    const auto g = random_graph(rng, n, 0.12 + 0.2 * uniform01(rng));
    if (g.edges.empty()) continue;
    const auto input = best_louvain(g, 10, rng());
    if (input.n_communities < 2) continue;
    ++graphs;
    const auto b = force_bipartition(g, input);
    if (b.quality > input.quality + 1e-12) ++above_input;
    if (input.n_communities <= 10) {
      ++exhaustive_checked;
      if (std::abs(b.quality - best_bipartition_q(g, input)) > 1e-12) ++exhaustive_mismatch;
    }
  }
  return {above_input == 0 && exhaustive_mismatch == 0 && exhaustive_checked > 0,
          fmt::format("Q above input in {}/20, exhaustive mismatch in {}/{} with k <= 10", above_input,
                      exhaustive_mismatch, exhaustive_checked)};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NATSCALE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome ac9_determinism() {
  const auto data = dataset("two_level", two_level_spec());
  const auto root = work_root();
  {
    std::ofstream cfg(root / "determinism.json");
    cfg << nlohmann::json{{"events", (data / "events.csv").string()},
                          {"locations", (data / "locations.csv").string()}}.dump();
  }
  const std::string common = fmt::format("run --config {} --seed {}", (root / "determinism.json").string(), kEndToEndSeed);
  const int rc_a = run_cli(common + " --out " + (root / "det_a").string());
  const int rc_b = run_cli(common + " --out " + (root / "det_b").string());
  if (rc_a != 0 || rc_b != 0) return {false, fmt::format("run exited with {} and {}", rc_a, rc_b)};

  std::vector<std::string> files{"natural_scales.json", "similarity.csv"};
  for (const auto& entry : std::filesystem::directory_iterator(root / "det_a"))
    if (entry.path().extension() == ".geojson") files.push_back(entry.path().filename().string());
  int differing = 0;
  for (const auto& f : files)
    if (!std::filesystem::exists(root / "det_b" / f) || slurp(root / "det_a" / f) != slurp(root / "det_b" / f)) ++differing;
  return {differing == 0, fmt::format("{} of {} compared files differ", differing, files.size())};
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

Outcome ac10_profiles() {
  const auto data = dataset("two_level", two_level_spec());
  const auto out = work_root() / "run_two";
  if (!std::filesystem::exists(out / "user_profiles.csv")) return {false, "AC-5 run output missing"};

  const auto locations = load_locations(data / "locations.csv");
  const auto events = load_events(data / "events.csv", EventFormat::Csv).events;
  std::set<std::int64_t> kept;
  for (const auto& row : read_csv(out / "partitions" / "scale_001.csv")) kept.insert(std::stoll(row[0]));
  std::vector<double> thresholds;
  for (const auto& row : read_csv(out / "percentiles.csv")) thresholds.push_back(std::stod(row[1]));
  const auto scales_json = nlohmann::json::parse(slurp(out / "natural_scales.json"));
  std::vector<std::pair<int, int>> intervals;
  for (const auto& iv : scales_json["intervals"]) intervals.emplace_back(iv["lo"].get<int>(), iv["hi"].get<int>());

  // Nearest seed by full scan, restricted to kept locations afterwards.
  std::map<std::string, std::set<LocationId>> visited;
  for (const auto& e : events) {
    LocationId best = 0;
    double best_d = haversine_km(e.position, locations.position(0));
    for (std::size_t i = 1; i < locations.size(); ++i) {
      const double d = haversine_km(e.position, locations.position(static_cast<LocationId>(i)));
      if (d < best_d) {
        best_d = d;
        best = static_cast<LocationId>(i);
      }
    }
    auto& v = visited[e.user_id];
    if (kept.count(locations[best].source_id)) v.insert(best);
  }

  std::map<std::string, std::string> expected_user;
  std::map<std::string, std::pair<std::size_t, double>> classes;  // label -> users, summed visits
  for (const auto& [user, locs] : visited) {
    std::set<int> hit;
    const std::vector<LocationId> ids(locs.begin(), locs.end());
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        const double d = haversine_km(locations.position(ids[i]), locations.position(ids[j]));
        int s = 100;
        for (int t = 1; t <= 100; ++t)
          if (thresholds[static_cast<std::size_t>(t - 1)] >= d) {
            s = t;
            break;
          }
        for (std::size_t k = 0; k < intervals.size(); ++k)
          if (s >= intervals[k].first && s <= intervals[k].second) hit.insert(static_cast<int>(k) + 1);
      }
    if (hit.empty()) continue;
    std::string label;
    for (int k : hit) label += (label.empty() || intervals.size() <= 9 ? "" : ".") + std::to_string(k);
    expected_user[user] = label;
    classes[label].first += 1;
    classes[label].second += static_cast<double>(ids.size());
  }

  std::map<std::string, std::string> reported_user;
  std::map<std::string, std::size_t> reported_classes;
  for (const auto& row : read_csv(out / "user_profiles.csv")) {
    reported_user[row[0]] = row[1];
    ++reported_classes[row[1]];
  }
  std::map<std::string, std::size_t> expected_classes;
  for (const auto& [label, c] : classes) expected_classes[label] = c.first;
  const bool counts_equal = reported_user == expected_user && reported_classes == expected_classes;

  std::string all;
  for (std::size_t k = 1; k <= intervals.size(); ++k) all += (k > 1 && intervals.size() > 9 ? "." : "") + std::to_string(k);
  bool most_active = classes.count(all) > 0;
  std::string means;
  for (const auto& [label, c] : classes) {
    const double mean = c.second / static_cast<double>(c.first);
    means += fmt::format(" {}:{:.2f}", label, mean);
    if (classes.count(all) && mean > classes[all].second / static_cast<double>(classes[all].first)) most_active = false;
  }
  return {counts_equal && most_active,
          fmt::format("recount {} ({} users), all-scales class most active: {}; mean visited locations{}",
                      counts_equal ? "matches" : "differs", expected_user.size(), most_active ? "yes" : "no", means)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> allowed;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--allow-fail" && i + 1 < argc) {
      allowed.insert(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--allow-fail AC-n]...\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
      {"AC-1", ac1_rand_oracle},     {"AC-2", ac2_modularity_oracle}, {"AC-3", ac3_louvain_quality},
      {"AC-4", ac4_breakpoint_oracle}, {"AC-5", ac5_natural_scales},  {"AC-6", ac6_voronoi},
      {"AC-7", ac7_smoothing},       {"AC-8", ac8_bipartition},       {"AC-9", ac9_determinism},
      {"AC-10", ac10_profiles}};
  int failed = 0;
  int blocking = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) {
      ++failed;
      if (!allowed.count(name)) ++blocking;
    }
    std::cout << name << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << '/' << criteria.size() << " criteria passed";
  if (failed > blocking) std::cout << " (" << failed - blocking << " known failure allowed)";
  std::cout << std::endl;
  return blocking == 0 ? 0 : 1;
}
