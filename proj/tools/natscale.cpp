// natscale command line: run the pipeline, generate synthetic data, build seed grids.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "natscale/error.hpp"
#include "natscale/grid.hpp"
#include "natscale/pipeline.hpp"
#include "natscale/synthetic.hpp"

namespace {

using natscale::Error;
using nlohmann::json;

// Flags hold optionals so only explicitly given values override the config file.
struct RunFlags {
  std::string config;
  std::optional<std::string> events, events_format, locations, degree_mode, percentile_mode, eq4, score, out, run_id;
  std::optional<std::int64_t> min_users;
  std::optional<int> runs, min_interval, max_smooth_iters;
  std::optional<double> bbox_margin, grid_spacing;
  std::vector<double> grid_bbox;
  std::uint64_t seed = 0;
};

struct SynthFlags {
  std::string config;
  std::string out = "synthetic";
  std::optional<std::string> levels, mixing;
  std::optional<std::size_t> users, locations, movements;
  std::optional<double> spread, region;
  std::vector<double> center;
  std::uint64_t seed = 0;
};

struct GridFlags {
  std::string config;
  std::string out = "locations.csv";
  std::vector<double> bbox;
  std::optional<double> spacing;
};

template <typename T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

json config_or_empty(const std::string& path) {
  return path.empty() ? json::object() : natscale::read_config_file(path);
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find_first_of(",:", start), text.size());
    const std::string token = text.substr(start, end - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw natscale::config_error(fmt::format("'{}' is not a number list", text));
    }
    start = end + 1;
  }
  return out;
}

int cmd_run(const RunFlags& f) {
  natscale::RunConfig config;
  json file = config_or_empty(f.config);
  natscale::apply_config(config, file);

  json o = json::object();
  put(o, "events", f.events);
  put(o, "events_format", f.events_format);
  put(o, "locations", f.locations);
  put(o, "degree_mode", f.degree_mode);
  put(o, "percentile_mode", f.percentile_mode);
  put(o, "eq4_convention", f.eq4);
  put(o, "interval_score", f.score);
  put(o, "output_dir", f.out);
  put(o, "run_id", f.run_id);
  put(o, "min_users", f.min_users);
  put(o, "runs", f.runs);
  put(o, "min_interval", f.min_interval);
  put(o, "max_smooth_iters", f.max_smooth_iters);
  put(o, "bbox_margin", f.bbox_margin);
  o["rng_seed"] = f.seed;
  if (!f.grid_bbox.empty() || f.grid_spacing) {
    json g = json::object();
    if (!f.grid_bbox.empty()) g["bbox"] = f.grid_bbox;
    put(g, "spacing_km", f.grid_spacing);
    o["grid"] = g;
  }
  natscale::apply_config(config, o);

  const auto manifest = natscale::run_pipeline(config);
  std::cout << fmt::format("{} locations kept, {} natural scales\n", manifest.locations_kept, manifest.natural_scales.size());
  for (std::size_t k = 0; k < manifest.natural_scales.size(); ++k) {
    const auto& ns = manifest.natural_scales[k];
    std::cout << fmt::format("  scale {}: percentiles {}-{}, prototype {} ({:.3f} km)\n", k + 1, ns.lo, ns.hi,
                             ns.prototype, ns.threshold_km);
  }
  for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "outputs in " << config.output_dir.string() << '\n';
  return 0;
}

int cmd_synth(const SynthFlags& f) {
  natscale::SyntheticSpec spec;
  spec.levels = {{5.0, 20}, {80.0, 4}};
  spec.mixing = {0.7, 0.3};
  natscale::apply_config(spec, config_or_empty(f.config));

  json o = json::object();
  if (f.levels) {
    const auto v = parse_numbers(*f.levels);
    if (v.size() % 2 != 0) throw natscale::config_error("--levels takes radius:count pairs");
    json levels = json::array();
    for (std::size_t i = 0; i < v.size(); i += 2) levels.push_back({v[i], static_cast<int>(v[i + 1])});
    o["levels"] = levels;
  }
  if (f.mixing) o["mixing"] = parse_numbers(*f.mixing);
  put(o, "users", f.users);
  put(o, "locations", f.locations);
  put(o, "movements_per_user", f.movements);
  put(o, "activity_spread", f.spread);
  put(o, "region_radius_km", f.region);
  if (!f.center.empty()) o["center"] = f.center;
  o["rng_seed"] = f.seed;
  natscale::apply_config(spec, o);

  const auto data = natscale::generate_synthetic(spec);
  natscale::write_synthetic(f.out, spec, data);
  std::cout << fmt::format("{} events, {} locations written to {}\n", data.events.size(), data.locations.size(), f.out);
  return 0;
}

int cmd_grid(const GridFlags& f) {
  natscale::GridSpec grid;
  json file = config_or_empty(f.config);
  natscale::apply_config(grid, file.contains("grid") ? file["grid"] : file);
  json o = json::object();
  if (!f.bbox.empty()) o["bbox"] = f.bbox;
  put(o, "spacing_km", f.spacing);
  natscale::apply_config(grid, o);

  const auto registry = natscale::make_grid(grid.box, grid.spacing_km);
  natscale::write_locations(f.out, registry);
  std::cout << fmt::format("{} seeds written to {}\n", registry.size(), f.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect natural scales of movement in geotagged trace data"};
  app.set_version_flag("--version", std::string(natscale::kVersion));
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run the full pipeline");
  run->add_option("--config", rf.config, "TOML or JSON config file")->check(CLI::ExistingFile);
  run->add_option("--seed", rf.seed, "Root random seed")->required();
  run->add_option("--events", rf.events, "Events file (CSV or JSONL)");
  run->add_option("--events-format", rf.events_format, "csv or jsonl");
  run->add_option("--locations", rf.locations, "Locations CSV");
  run->add_option("--grid-bbox", rf.grid_bbox, "Grid box: lat_min lon_min lat_max lon_max")->expected(4);
  run->add_option("--grid-spacing", rf.grid_spacing, "Grid spacing in km");
  run->add_option("--min-users", rf.min_users, "Minimum distinct users per location");
  run->add_option("--degree-mode", rf.degree_mode, "distinct_users or graph_degree");
  run->add_option("--runs", rf.runs, "Louvain runs per scale");
  run->add_option("--percentile-mode", rf.percentile_mode, "by_weight or by_edge");
  run->add_option("--min-interval", rf.min_interval, "Minimum natural scale width");
  run->add_option("--max-smooth-iters", rf.max_smooth_iters, "Smoothing pass cap");
  run->add_option("--eq4-convention", rf.eq4, "cross_cut or literal");
  run->add_option("--interval-score", rf.score, "size_weighted_mean or size_weighted_sum");
  run->add_option("--bbox-margin", rf.bbox_margin, "Voronoi clipping margin");
  run->add_option("--out,--output-dir", rf.out, "Output directory");
  run->add_option("--run-id", rf.run_id, "Run identifier stored in GeoJSON properties");

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic hierarchical data set");
  synth->add_option("--config", sf.config, "TOML or JSON spec file")->check(CLI::ExistingFile);
  synth->add_option("--seed", sf.seed, "Root random seed")->required();
  synth->add_option("--out,--output-dir", sf.out, "Output directory")->capture_default_str();
  synth->add_option("--levels", sf.levels, "radius:count pairs, finest first, e.g. 5:20,80:4");
  synth->add_option("--mixing", sf.mixing, "Per-level probabilities, e.g. 0.7,0.3");
  synth->add_option("--users", sf.users, "Number of users");
  synth->add_option("--locations", sf.locations, "Number of locations");
  synth->add_option("--movements-per-user", sf.movements, "Mean events per user");
  synth->add_option("--activity-spread", sf.spread, "Relative spread of per-user event counts");
  synth->add_option("--region-radius", sf.region, "Top-level placement radius in km");
  synth->add_option("--center", sf.center, "Region centre: lat lon")->expected(2);

  GridFlags gf;
  auto* grid = app.add_subcommand("grid", "Write a regular seed grid as a locations CSV");
  grid->add_option("--config", gf.config, "TOML or JSON file with grid keys")->check(CLI::ExistingFile);
  grid->add_option("--bbox", gf.bbox, "lat_min lon_min lat_max lon_max")->expected(4);
  grid->add_option("--spacing-km", gf.spacing, "Spacing in km");
  grid->add_option("--out", gf.out, "Output CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(rf);
    if (*synth) return cmd_synth(sf);
    return cmd_grid(gf);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return natscale::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
