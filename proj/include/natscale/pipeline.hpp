#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "natscale/graph.hpp"
#include "natscale/grid.hpp"
#include "natscale/ingest.hpp"
#include "natscale/scalespace.hpp"
#include "natscale/synthetic.hpp"

namespace natscale {

inline constexpr const char* kVersion = "1.0.0";

struct GridSpec {
  LatLonBox box;
  double spacing_km = 0.0;
};

struct RunConfig {
  std::filesystem::path events_path;
  std::optional<EventFormat> events_format;  // guessed from the extension when unset
  std::filesystem::path locations_path;
  std::optional<GridSpec> grid;              // used when no locations file is given
  std::int64_t min_users = 5;
  DegreeMode degree_mode = DegreeMode::DistinctUsers;
  int runs = 100;
  PercentileWeighting percentile_mode = PercentileWeighting::ByWeight;
  int min_interval = kDefaultMinInterval;
  int max_smooth_iters = 100;
  std::optional<std::uint64_t> rng_seed;
  CutConvention eq4_convention = CutConvention::CrossCut;
  IntervalScore interval_score = IntervalScore::SizeWeightedMean;
  double bbox_margin = 0.05;
  std::filesystem::path output_dir = "natscale_out";
  std::string run_id;                         // defaults to "run-<seed>"

  /// Throws Error(Config) for out-of-range values or missing inputs.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

/// Reads a JSON object or a flat TOML document (key = value lines, optional [tables]
/// flattened as table.key) into JSON.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Overlays recognised keys from `j` onto `config`; unknown keys are a config error.
void apply_config(RunConfig& config, const nlohmann::json& j);
void apply_config(SyntheticSpec& spec, const nlohmann::json& j);
void apply_config(GridSpec& grid, const nlohmann::json& j);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string status;  // "complete" or "incomplete"
  std::string failed_stage;
  std::string error;
  std::vector<StageTiming> timings;
  std::vector<std::string> warnings;
  std::vector<NaturalScale> natural_scales;
  std::vector<int> breakpoints;
  Separation separation;
  std::size_t locations_kept = 0;
  std::vector<std::pair<std::string, std::string>> files;  // relative path, sha256
  std::optional<bool> matches_previous_run;
};

/// Runs every stage and writes all artifacts plus manifest.json into config.output_dir.
/// On failure the manifest is still written with status "incomplete" and the error is
/// rethrown with the failing stage's name.
RunManifest run_pipeline(const RunConfig& config);

/// Hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace natscale
