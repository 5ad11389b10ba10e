#include "natscale/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "natscale/community.hpp"
#include "natscale/error.hpp"
#include "natscale/geojson.hpp"
#include "natscale/geometry.hpp"
#include "natscale/random.hpp"
#include "text.hpp"

namespace natscale {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

// Flat TOML subset: scalars, single-line arrays (nestable), [table] headers.
class TomlReader {
 public:
  TomlReader(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  nlohmann::json parse() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text_)};
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_no;
      line_ = strip_comment(raw);
      pos_ = 0;
      line_no_ = line_no;
      skip_ws();
      if (pos_ >= line_.size()) continue;
      if (line_[pos_] == '[') {
        const auto close = line_.find(']', pos_);
        if (close == std::string::npos) fail("unterminated table header");
        const auto name = std::string(detail::trim(std::string_view(line_).substr(pos_ + 1, close - pos_ - 1)));
        if (name.empty()) fail("empty table name");
        table = &root[name];
        if (!table->is_object()) *table = nlohmann::json::object();
        continue;
      }
      const auto eq = line_.find('=', pos_);
      if (eq == std::string::npos) fail("expected key = value");
      std::string key(detail::trim(std::string_view(line_).substr(pos_, eq - pos_)));
      if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
      if (key.empty()) fail("empty key");
      pos_ = eq + 1;
      nlohmann::json value = parse_value();
      skip_ws();
      if (pos_ != line_.size()) fail("trailing characters after value");
      (*table)[key] = std::move(value);
    }
    return root;
  }

 private:
  static std::string strip_comment(const std::string& s) {
    bool in_str = false;
    char quote = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const char c = s[i];
      if (in_str) {
        if (c == '\\' && quote == '"') {
          ++i;
        } else if (c == quote) {
          in_str = false;
        }
      } else if (c == '"' || c == '\'') {
        in_str = true;
        quote = c;
      } else if (c == '#') {
        return s.substr(0, i);
      }
    }
    return s;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw config_error(fmt::format("{} line {}: {}", source_, line_no_, what));
  }

  void skip_ws() {
    while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t' || line_[pos_] == '\r')) ++pos_;
  }

  nlohmann::json parse_value() {
    skip_ws();
    if (pos_ >= line_.size()) fail("missing value");
    const char c = line_[pos_];
    if (c == '"' || c == '\'') return parse_string(c);
    if (c == '[') {
      ++pos_;
      nlohmann::json arr = nlohmann::json::array();
      skip_ws();
      if (pos_ < line_.size() && line_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      while (true) {
        arr.push_back(parse_value());
        skip_ws();
        if (pos_ >= line_.size()) fail("unterminated array");
        if (line_[pos_] == ',') {
          ++pos_;
          skip_ws();
          if (pos_ < line_.size() && line_[pos_] == ']') {
            ++pos_;
            return arr;
          }
          continue;
        }
        if (line_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        fail("expected , or ] in array");
      }
    }
    std::size_t end = pos_;
    while (end < line_.size() && line_[end] != ',' && line_[end] != ']' && line_[end] != ' ' && line_[end] != '\t' &&
           line_[end] != '\r')
      ++end;
    std::string token = line_.substr(pos_, end - pos_);
    pos_ = end;
    if (token == "true") return true;
    if (token == "false") return false;
    std::string digits;
    for (char ch : token)
      if (ch != '_') digits.push_back(ch);
    if (auto i = detail::parse_int(digits)) return *i;
    if (auto d = detail::parse_double(digits)) return *d;
    fail(fmt::format("unrecognised value '{}'", token));
  }

  nlohmann::json parse_string(char quote) {
    std::string out;
    ++pos_;
    while (pos_ < line_.size()) {
      const char c = line_[pos_++];
      if (c == quote) return out;
      if (c == '\\' && quote == '"' && pos_ < line_.size()) {
        const char e = line_[pos_++];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '\\': out.push_back('\\'); break;
          case '"': out.push_back('"'); break;
          default: fail(fmt::format("unsupported escape \\{}", e));
        }
      } else {
        out.push_back(c);
      }
    }
    fail("unterminated string");
  }

  std::string_view text_;
  std::string source_;
  std::string line_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw config_error(fmt::format("config key '{}' has the wrong type", key));
  }
}

std::int64_t get_int(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer()) throw config_error(fmt::format("config key '{}' must be an integer", key));
  return j.get<std::int64_t>();
}

double get_number(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number()) throw config_error(fmt::format("config key '{}' must be a number", key));
  return j.get<double>();
}

std::uint64_t get_seed(const nlohmann::json& j, const std::string& key) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw config_error(fmt::format("config key '{}' must be a non-negative integer", key));
}

DegreeMode parse_degree_mode(const std::string& s) {
  if (s == "distinct_users") return DegreeMode::DistinctUsers;
  if (s == "graph_degree") return DegreeMode::GraphDegree;
  throw config_error(fmt::format("unknown degree mode '{}' (expected distinct_users or graph_degree)", s));
}

std::string to_string(DegreeMode m) { return m == DegreeMode::DistinctUsers ? "distinct_users" : "graph_degree"; }
std::string to_string(EventFormat f) { return f == EventFormat::Csv ? "csv" : "jsonl"; }

}  // namespace

nlohmann::json read_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  const auto first = text.find_first_not_of(" \t\r\n");
  if (path.extension() == ".json" || (first != std::string::npos && text[first] == '{')) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw config_error(fmt::format("'{}' is not a JSON object", path.string()));
    return j;
  }
  return TomlReader(text, path.string()).parse();
}

void apply_config(GridSpec& grid, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "lat_min") grid.box.lat_min = get_number(value, key);
    else if (key == "lon_min") grid.box.lon_min = get_number(value, key);
    else if (key == "lat_max") grid.box.lat_max = get_number(value, key);
    else if (key == "lon_max") grid.box.lon_max = get_number(value, key);
    else if (key == "spacing_km") grid.spacing_km = get_number(value, key);
    else if (key == "bbox") {
      auto v = get_as<std::vector<double>>(value, key);
      if (v.size() != 4) throw config_error("grid bbox needs [lat_min, lon_min, lat_max, lon_max]");
      grid.box = {v[0], v[1], v[2], v[3]};
    } else if (key == "output" || key == "out") {
      // consumed by the CLI
    } else {
      throw config_error(fmt::format("unknown grid config key '{}'", key));
    }
  }
}

void apply_config(RunConfig& config, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "events" || key == "events_path") config.events_path = get_as<std::string>(value, key);
    else if (key == "events_format") config.events_format = parse_event_format(get_as<std::string>(value, key));
    else if (key == "locations" || key == "locations_path") config.locations_path = get_as<std::string>(value, key);
    else if (key == "grid") {
      GridSpec g = config.grid.value_or(GridSpec{});
      apply_config(g, value);
      config.grid = g;
    } else if (key == "min_users") config.min_users = get_int(value, key);
    else if (key == "degree_mode") config.degree_mode = parse_degree_mode(get_as<std::string>(value, key));
    else if (key == "runs") config.runs = static_cast<int>(get_int(value, key));
    else if (key == "percentile_mode") config.percentile_mode = parse_percentile_weighting(get_as<std::string>(value, key));
    else if (key == "min_interval") config.min_interval = static_cast<int>(get_int(value, key));
    else if (key == "max_smooth_iters") config.max_smooth_iters = static_cast<int>(get_int(value, key));
    else if (key == "rng_seed" || key == "seed") config.rng_seed = get_seed(value, key);
    else if (key == "eq4_convention") config.eq4_convention = parse_cut_convention(get_as<std::string>(value, key));
    else if (key == "interval_score") config.interval_score = parse_interval_score(get_as<std::string>(value, key));
    else if (key == "bbox_margin") config.bbox_margin = get_number(value, key);
    else if (key == "output_dir" || key == "out") config.output_dir = get_as<std::string>(value, key);
    else if (key == "run_id") config.run_id = get_as<std::string>(value, key);
    else throw config_error(fmt::format("unknown config key '{}'", key));
  }
}

void apply_config(SyntheticSpec& spec, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "levels") {
      if (!value.is_array()) throw config_error("levels must be an array");
      spec.levels.clear();
      for (const auto& lv : value) {
        if (lv.is_array() && lv.size() == 2) {
          spec.levels.push_back({get_number(lv[0], key), static_cast<int>(get_int(lv[1], key))});
        } else if (lv.is_object()) {
          spec.levels.push_back({get_number(lv.at("radius_km"), key), static_cast<int>(get_int(lv.at("cluster_count"), key))});
        } else {
          throw config_error("each level is [radius_km, cluster_count] or {radius_km, cluster_count}");
        }
      }
    } else if (key == "mixing") spec.mixing = get_as<std::vector<double>>(value, key);
    else if (key == "users") spec.users = static_cast<std::size_t>(get_int(value, key));
    else if (key == "movements_per_user") spec.movements_per_user = static_cast<std::size_t>(get_int(value, key));
    else if (key == "activity_spread") spec.activity_spread = get_number(value, key);
    else if (key == "locations") spec.locations = static_cast<std::size_t>(get_int(value, key));
    else if (key == "center") {
      auto v = get_as<std::vector<double>>(value, key);
      if (v.size() != 2) throw config_error("center needs [lat, lon]");
      spec.center = {v[0], v[1]};
    } else if (key == "region_radius_km") spec.region_radius_km = get_number(value, key);
    else if (key == "rng_seed" || key == "seed") spec.seed = get_seed(value, key);
    else if (key == "output_dir" || key == "out") {
      // consumed by the CLI
    } else {
      throw config_error(fmt::format("unknown synth config key '{}'", key));
    }
  }
}

void RunConfig::validate() const {
  if (events_path.empty()) throw config_error("no events file given");
  if (locations_path.empty() && !grid) throw config_error("give a locations file or a grid spec");
  if (min_users < 0) throw config_error("min_users must be >= 0");
  if (runs < 1 || runs > 100000) throw config_error("runs must lie in [1, 100000]");
  if (min_interval < 1 || min_interval > 50) throw config_error("min_interval must lie in [1, 50]");
  if (max_smooth_iters < 0 || max_smooth_iters > 100000) throw config_error("max_smooth_iters must lie in [0, 100000]");
  if (!rng_seed) throw config_error("a seed is required");
  if (!(bbox_margin >= 0.0 && bbox_margin <= 10.0)) throw config_error("bbox_margin must lie in [0, 10]");
  if (output_dir.empty()) throw config_error("output_dir must not be empty");
  if (grid && !(grid->spacing_km > 0.0)) throw config_error("grid spacing_km must be > 0");
}

ojson RunConfig::to_json() const {
  ojson j;
  j["events"] = events_path.string();
  j["events_format"] = events_format ? to_string(*events_format) : to_string(event_format_for(events_path));
  if (!locations_path.empty()) j["locations"] = locations_path.string();
  if (grid) {
    j["grid"] = {{"lat_min", grid->box.lat_min}, {"lon_min", grid->box.lon_min}, {"lat_max", grid->box.lat_max},
                 {"lon_max", grid->box.lon_max}, {"spacing_km", grid->spacing_km}};
  }
  j["min_users"] = min_users;
  j["degree_mode"] = to_string(degree_mode);
  j["runs"] = runs;
  j["percentile_mode"] = to_string(percentile_mode);
  j["min_interval"] = min_interval;
  j["max_smooth_iters"] = max_smooth_iters;
  j["rng_seed"] = rng_seed.value_or(0);
  j["eq4_convention"] = to_string(eq4_convention);
  j["interval_score"] = to_string(interval_score);
  j["bbox_margin"] = bbox_margin;
  j["output_dir"] = output_dir.string();
  j["run_id"] = run_id.empty() ? fmt::format("run-{}", rng_seed.value_or(0)) : run_id;
  return j;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error(fmt::format("cannot read '{}'", path.string()));
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

class RunContext {
 public:
  explicit RunContext(const RunConfig& config) : config_(config), out_(config.output_dir) {}

  template <typename Fn>
  auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    const auto start = std::chrono::steady_clock::now();
    current_ = name;
    auto finish = [&] {
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
      manifest.timings.push_back({name, dt.count()});
    };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        finish();
      } else {
        auto result = fn();
        finish();
        return result;
      }
    } catch (const Error& e) {
      finish();
      if (!e.stage().empty()) throw;
      throw Error(e.kind(), name, e.what());
    } catch (const std::exception& e) {
      finish();
      throw Error(ErrorKind::Stage, name, e.what());
    }
  }

  fs::path file(const std::string& rel) {
    files_.push_back(rel);
    return out_ / rel;
  }

  void write_json(const std::string& rel, const ojson& j) {
    std::ofstream out(file(rel), std::ios::binary);
    if (!out) throw input_error(fmt::format("cannot write '{}'", (out_ / rel).string()));
    out << j.dump(2) << '\n';
  }

  void finalize_manifest(const std::map<std::string, std::string>& previous_hashes) {
    for (const auto& rel : files_) {
      if (fs::exists(out_ / rel)) manifest.files.emplace_back(rel, sha256_file(out_ / rel));
    }
    if (!previous_hashes.empty()) {
      bool match = true;
      std::size_t compared = 0;
      for (const auto& [rel, hash] : manifest.files) {
        auto it = previous_hashes.find(rel);
        if (it == previous_hashes.end()) continue;
        ++compared;
        if (it->second != hash) {
          match = false;
          manifest.warnings.push_back(fmt::format("'{}' differs from the previous run", rel));
        }
      }
      if (compared > 0) manifest.matches_previous_run = match;
    }
    write_manifest();
  }

  void write_manifest() {
    ojson j;
    j["tool"] = "natscale";
    j["version"] = kVersion;
    j["status"] = manifest.status;
    if (!manifest.failed_stage.empty()) {
      j["failed_stage"] = manifest.failed_stage;
      j["error"] = manifest.error;
    }
    j["config"] = config_.to_json();
    j["seed"] = config_.rng_seed.value_or(0);
    j["locations_kept"] = manifest.locations_kept;
    j["natural_scale_count"] = manifest.natural_scales.size();
    j["breakpoints"] = manifest.breakpoints;
    ojson timings = ojson::object();
    for (const auto& t : manifest.timings) timings[t.stage] = t.seconds;
    j["timings_seconds"] = timings;
    j["warnings"] = manifest.warnings;
    ojson files = ojson::array();
    for (const auto& [rel, hash] : manifest.files) files.push_back({{"path", rel}, {"sha256", hash}});
    j["files"] = files;
    if (manifest.matches_previous_run) j["matches_previous_run"] = *manifest.matches_previous_run;
    std::ofstream out(out_ / "manifest.json", std::ios::binary);
    out << j.dump(2) << '\n';
  }

  const std::string& current() const { return current_; }

  RunManifest manifest;

 private:
  const RunConfig& config_;
  fs::path out_;
  std::vector<std::string> files_;
  std::string current_;
};

std::map<std::string, std::string> previous_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) return out;
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("files") || j.value("status", "") != "complete") return out;
  for (const auto& f : j["files"])
    if (f.contains("path") && f.contains("sha256")) out[f["path"].get<std::string>()] = f["sha256"].get<std::string>();
  return out;
}

// Removes artifacts of an earlier run that this run may not overwrite.
void clear_previous_outputs(const fs::path& dir) {
  if (!fs::exists(dir)) return;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("boundaries_scale_") && name.ends_with(".geojson"))
      fs::remove(entry.path());
  }
  if (fs::exists(dir / "partitions")) {
    for (const auto& entry : fs::directory_iterator(dir / "partitions"))
      if (entry.is_regular_file() && entry.path().extension() == ".csv") fs::remove(entry.path());
  }
}

ojson natural_scales_json(const BreakpointSet& breaks, const std::vector<NaturalScale>& scales, const RunConfig& config) {
  ojson j;
  j["breakpoints"] = breaks.breakpoints;
  ojson intervals = ojson::array();
  for (const auto& ns : scales)
    intervals.push_back({{"lo", ns.lo}, {"hi", ns.hi}, {"prototype", ns.prototype}, {"threshold_km", ns.threshold_km}});
  j["intervals"] = intervals;
  if (breaks.breakpoints.empty()) {
    j["separation"] = nullptr;
  } else if (breaks.separation.infinite()) {
    j["separation"] = "inf";
  } else {
    j["separation"] = breaks.separation.sigma;
  }
  j["convention"] = to_string(config.eq4_convention);
  j["interval_score"] = to_string(config.interval_score);
  j["percentile_mode"] = to_string(config.percentile_mode);
  j["min_interval"] = config.min_interval;
  return j;
}

}  // namespace

RunManifest run_pipeline(const RunConfig& config) {
  config.validate();
  const std::uint64_t seed = *config.rng_seed;
  const std::string run_id = config.run_id.empty() ? fmt::format("run-{}", seed) : config.run_id;
  const fs::path out_dir = config.output_dir;

  auto prior = previous_hashes(out_dir);
  fs::create_directories(out_dir);
  clear_previous_outputs(out_dir);
  fs::create_directories(out_dir / "partitions");

  RunContext ctx(config);
  ctx.manifest.status = "incomplete";
  try {
    const LocationRegistry registry = ctx.stage("load_locations", [&] {
      return config.locations_path.empty() ? make_grid(config.grid->box, config.grid->spacing_km)
                                           : load_locations(config.locations_path);
    });

    const LoadedEvents loaded = ctx.stage("load_events", [&] {
      auto ev = load_events(config.events_path, config.events_format.value_or(event_format_for(config.events_path)));
      ojson rej;
      rej["rejected"] = ev.rejections.rejected;
      rej["rows"] = ev.rejections.rows;
      rej["sample_lines"] = ev.rejections.sample_lines;
      ctx.write_json("rejections.json", rej);
      if (ev.rejections.rejected > 0)
        ctx.manifest.warnings.push_back(fmt::format("{} malformed event rows rejected", ev.rejections.rejected));
      return ev;
    });

    const auto assignments = ctx.stage("assign_events", [&] { return assign_events(loaded.events, registry); });
    const WeightedGraph graph = ctx.stage("build_graph", [&] { return build_graph(assignments, registry); });
    const FilteredGraph filtered = ctx.stage("filter_min_degree", [&] {
      return filter_min_degree(graph, registry, config.min_users, config.degree_mode);
    });
    ctx.manifest.locations_kept = filtered.registry.size();

    std::vector<std::int64_t> ids;
    for (const auto& loc : filtered.registry.locations()) ids.push_back(loc.source_id);

    const VoronoiDiagram diagram = ctx.stage("build_voronoi", [&] { return build_voronoi(filtered.registry, config.bbox_margin); });

    const PercentileTable table = ctx.stage("percentile_table", [&] {
      auto t = percentile_table(filtered.graph, config.percentile_mode);
      write_percentile_csv(ctx.file("percentiles.csv"), t);
      return t;
    });

    const std::vector<Partition> raw = ctx.stage("community_detection", [&] {
      std::vector<Partition> parts;
      parts.reserve(100);
      for (int s = 1; s <= 100; ++s) {
        const ScaleIndex scale(s);
        const WeightedGraph gs = percentile_graph(filtered.graph, table, scale);
        Partition p = best_louvain(gs, config.runs, derive_seed(seed, "louvain", static_cast<std::uint64_t>(s)));
        p.source_scale = scale;
        write_partition_csv(ctx.file(fmt::format("partitions/raw_scale_{:03d}.csv", s)), p, ids);
        parts.push_back(std::move(p));
      }
      return parts;
    });

    const std::vector<Partition> smoothed = ctx.stage("smoothing", [&] {
      std::vector<Partition> parts;
      parts.reserve(raw.size());
      for (const auto& p : raw) {
        SmoothResult r = smooth(p, diagram, config.max_smooth_iters);
        if (!r.converged)
          ctx.manifest.warnings.push_back(fmt::format("smoothing at scale {} did not converge in {} passes",
                                                      p.source_scale->value(), config.max_smooth_iters));
        write_partition_csv(ctx.file(fmt::format("partitions/scale_{:03d}.csv", p.source_scale->value())), r.partition, ids);
        parts.push_back(std::move(r.partition));
      }
      return parts;
    });

    const SimilarityMatrix matrix = ctx.stage("similarity_matrix", [&] {
      auto m = similarity_matrix(smoothed, config.percentile_mode);
      write_similarity_csv(ctx.file("similarity.csv"), m);
      write_dissimilarity_csv(ctx.file("dissimilarity_normalized.csv"), m);
      return m;
    });

    const SeparationOptions sep_options{config.eq4_convention, config.interval_score};
    const BreakpointSet breaks = ctx.stage("detect_breakpoints", [&] {
      return detect_breakpoints(matrix, config.min_interval, sep_options);
    });
    const std::vector<NaturalScale> scales = ctx.stage("natural_scales", [&] {
      auto ns = natural_scales(matrix, breaks, table);
      ctx.write_json("natural_scales.json", natural_scales_json(breaks, ns, config));
      return ns;
    });
    ctx.manifest.natural_scales = scales;
    ctx.manifest.breakpoints = breaks.breakpoints;
    ctx.manifest.separation = breaks.separation;

    ctx.stage("multiscale_smoothing", [&] {
      std::vector<Partition> prototypes;
      std::vector<CellColumn> columns;
      for (std::size_t k = 0; k < scales.size(); ++k) {
        const auto proto = static_cast<std::size_t>(scales[k].prototype - 1);
        prototypes.push_back(raw[proto]);
        auto segments = extract_boundaries(smoothed[proto], diagram);
        for (auto& s : segments) s.scales = {static_cast<int>(k) + 1};
        write_boundaries_geojson(ctx.file(fmt::format("boundaries_scale_{}.geojson", k + 1)), segments, run_id);
        columns.push_back({fmt::format("community_at_scale_{}", k + 1), smoothed[proto].labels});
      }
      MultiscaleResult multi = smooth_multiscale(prototypes, diagram, config.max_smooth_iters);
      if (!multi.converged)
        ctx.manifest.warnings.push_back(fmt::format("multiscale smoothing did not converge in {} passes", config.max_smooth_iters));
      write_boundaries_geojson(ctx.file("boundaries_multiscale.geojson"), extract_boundaries(multi.tuples, diagram), run_id);
      write_cells_geojson(ctx.file("cells.geojson"), diagram, ids, columns, multi.tuples);
    });

    ctx.stage("bipartition", [&] {
      const Partition& full = raw.back();
      if (full.n_communities < 2 || full.n_communities > kMaxBipartitionCommunities) {
        ctx.manifest.warnings.push_back(
            fmt::format("bipartition skipped: scale 100 has {} communities", full.n_communities));
        return;
      }
      const WeightedGraph g100 = percentile_graph(filtered.graph, table, ScaleIndex(100));
      write_partition_csv(ctx.file("partitions/bipartition_scale_100.csv"), force_bipartition(g100, full), ids);
    });

    ctx.stage("user_profiles", [&] {
      const auto moves = user_movements(assignments, filtered.kept, filtered.registry);
      const UserProfiles profiles = user_profiles(moves, scales, table);
      {
        std::ofstream out(ctx.file("user_profiles.csv"), std::ios::binary);
        out << "user_id,scale_classes,visited_locations,movements\n";
        for (const auto& u : profiles.users)
          out << detail::csv_field(u.user_id) << ',' << scale_class_label(u.contributed_scales, scales.size()) << ','
              << u.visited_locations << ',' << u.movements << '\n';
      }
      std::ofstream out(ctx.file("user_profile_classes.csv"), std::ios::binary);
      out << "scale_classes,users,mean_visited_locations,mean_movements\n";
      for (const auto& c : profiles.classes)
        out << fmt::format("{},{},{:.6f},{:.6f}\n", scale_class_label(c.scales, scales.size()), c.users,
                           c.mean_visited_locations, c.mean_movements);
    });

    ctx.manifest.status = "complete";
    ctx.finalize_manifest(prior);
    return ctx.manifest;
  } catch (const Error& e) {
    ctx.manifest.failed_stage = e.stage().empty() ? ctx.current() : e.stage();
    ctx.manifest.error = e.what();
    ctx.finalize_manifest({});
    throw;
  }
}

}  // namespace natscale
