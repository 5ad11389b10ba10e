#include "natscale/community.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "natscale/error.hpp"
#include "natscale/graph.hpp"
#include "natscale/random.hpp"
#include "text.hpp"

namespace natscale {

namespace {

// Symmetric adjacency in CSR form. Self-loops are kept apart: loop[i] is the weight
// internal to node i (each internal edge counted once), degree[i] includes it twice.
struct LevelGraph {
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> targets;
  std::vector<double> weights;
  std::vector<double> loop;
  std::vector<double> degree;

  static LevelGraph from(const WeightedGraph& g) {
    LevelGraph lg;
    lg.n = g.n;
    lg.loop.assign(g.n, 0.0);
    lg.degree.assign(g.n, 0.0);
    std::vector<std::size_t> count(g.n, 0);
    for (const auto& e : g.edges) {
      ++count[static_cast<std::size_t>(e.u)];
      ++count[static_cast<std::size_t>(e.v)];
    }
    lg.fill(count, [&](auto&& add) {
      for (const auto& e : g.edges) add(static_cast<std::uint32_t>(e.u), static_cast<std::uint32_t>(e.v), static_cast<double>(e.weight));
    });
    return lg;
  }

  // Builds the CSR arrays from an edge producer that yields each undirected edge once.
  template <typename Producer>
  void fill(const std::vector<std::size_t>& count, Producer&& produce) {
    offsets.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + count[i];
    targets.resize(offsets[n]);
    weights.resize(offsets[n]);
    std::vector<std::size_t> pos(offsets.begin(), offsets.end() - 1);
    produce([&](std::uint32_t u, std::uint32_t v, double w) {
      targets[pos[u]] = v;
      weights[pos[u]++] = w;
      targets[pos[v]] = u;
      weights[pos[v]++] = w;
      degree[u] += w;
      degree[v] += w;
    });
  }

  double total_weight() const {
    double twice = 0.0;
    for (double d : degree) twice += d;
    return twice / 2.0;
  }
};

[[maybe_unused]] double level_modularity(const LevelGraph& g, const std::vector<std::uint32_t>& community, double W) {
  std::vector<double> inside(g.n, 0.0), tot(g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) {
    const auto c = community[i];
    tot[c] += g.degree[i];
    inside[c] += g.loop[i];
    for (std::size_t k = g.offsets[i]; k < g.offsets[i + 1]; ++k)
      if (community[g.targets[k]] == c && g.targets[k] > i) inside[c] += g.weights[k];
  }
  double q = 0.0;
  for (std::size_t c = 0; c < g.n; ++c) q += inside[c] / W - (tot[c] / (2.0 * W)) * (tot[c] / (2.0 * W));
  return q;
}

// Local-moving phase. Returns true when at least one vertex changed community.
bool move_nodes(const LevelGraph& g, std::vector<std::uint32_t>& community, double W, Rng& rng) {
  std::vector<double> tot(g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) tot[community[i]] += g.degree[i];

  std::vector<std::uint32_t> order(g.n);
  std::iota(order.begin(), order.end(), 0u);
  std::vector<double> link(g.n, 0.0);
  std::vector<std::uint32_t> touched;
  touched.reserve(64);

  constexpr int kMaxSweeps = 10000;  // guards against floating-point move cycles
  bool improved = false;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    shuffle(std::span<std::uint32_t>(order), rng);
    bool moved = false;
    for (std::uint32_t i : order) {
      const double k_i = g.degree[i];
      if (k_i == 0.0) continue;
      const std::uint32_t own = community[i];

      for (std::size_t k = g.offsets[i]; k < g.offsets[i + 1]; ++k) {
        const auto c = community[g.targets[k]];
        if (link[c] == 0.0) touched.push_back(c);
        link[c] += g.weights[k];
      }
      tot[own] -= k_i;

      // gain(D) = k_{i,D} - tot_D * k_i / 2W; only a strictly better community wins.
      const double scale = k_i / (2.0 * W);
      std::uint32_t best = own;
      double best_gain = link[own] - tot[own] * scale;
      for (auto c : touched) {
        const double gain = link[c] - tot[c] * scale;
        if (gain > best_gain) {
          best_gain = gain;
          best = c;
        }
      }
      for (auto c : touched) link[c] = 0.0;
      touched.clear();

      tot[best] += k_i;
      if (best != own) {
        community[i] = best;
        moved = true;
      }
    }
    if (!moved) break;
    improved = true;
  }
  return improved;
}

// Renumbers communities densely by first appearance; returns the community count.
std::uint32_t renumber(std::vector<std::uint32_t>& community) {
  std::vector<std::uint32_t> map(community.size(), UINT32_MAX);
  std::uint32_t next = 0;
  for (auto& c : community) {
    if (map[c] == UINT32_MAX) map[c] = next++;
    c = map[c];
  }
  return next;
}

LevelGraph aggregate(const LevelGraph& g, const std::vector<std::uint32_t>& community, std::uint32_t k) {
  LevelGraph out;
  out.n = k;
  out.loop.assign(k, 0.0);
  out.degree.assign(k, 0.0);

  struct Link {
    std::uint32_t a, b;
    double w;
  };
  std::vector<Link> links;
  for (std::size_t i = 0; i < g.n; ++i) {
    const auto ci = community[i];
    out.loop[ci] += g.loop[i];
    for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
      const auto j = g.targets[e];
      if (j <= i) continue;
      const auto cj = community[j];
      if (ci == cj) {
        out.loop[ci] += g.weights[e];
      } else {
        links.push_back({std::min(ci, cj), std::max(ci, cj), g.weights[e]});
      }
    }
  }
  std::sort(links.begin(), links.end(), [](const Link& x, const Link& y) {
    return x.a != y.a ? x.a < y.a : x.b < y.b;
  });
  std::vector<Link> merged;
  for (const auto& l : links) {
    if (!merged.empty() && merged.back().a == l.a && merged.back().b == l.b) {
      merged.back().w += l.w;
    } else {
      merged.push_back(l);
    }
  }

  std::vector<std::size_t> count(k, 0);
  for (const auto& l : merged) {
    ++count[l.a];
    ++count[l.b];
  }
  for (std::uint32_t c = 0; c < k; ++c) out.degree[c] = 2.0 * out.loop[c];
  out.fill(count, [&](auto&& add) {
    for (const auto& l : merged) add(l.a, l.b, l.w);
  });
  return out;
}

Partition run_louvain(const LevelGraph& base, std::uint64_t seed) {
  const double W = base.total_weight();
  Rng rng(seed);

  std::vector<std::uint32_t> membership(base.n);
  std::iota(membership.begin(), membership.end(), 0u);

  LevelGraph level = base;
#ifndef NDEBUG
  double previous_q = -1.0;
#endif
  while (true) {
    std::vector<std::uint32_t> community(level.n);
    std::iota(community.begin(), community.end(), 0u);
    if (!move_nodes(level, community, W, rng)) break;

    const std::uint32_t k = renumber(community);
#ifndef NDEBUG
    const double q = level_modularity(level, community, W);
    assert(q >= previous_q - 1e-12);
    previous_q = q;
#endif
    for (auto& m : membership) m = community[m];
    if (k == level.n) break;
    level = aggregate(level, community, k);
  }

  std::vector<Label> labels(membership.begin(), membership.end());
  return Partition::from_labels(labels);
}

}  // namespace

Partition louvain(const WeightedGraph& graph, std::uint64_t seed) {
  if (graph.total_weight() <= 0) throw stage_error("louvain", "graph carries no edge weight");
  Partition p = run_louvain(LevelGraph::from(graph), seed);
  p.quality = modularity(graph, p);
  return p;
}

Partition best_louvain(const WeightedGraph& graph, int runs, std::uint64_t seed) {
  if (runs < 1) throw config_error("best_louvain: runs must be >= 1");
  if (graph.total_weight() <= 0) throw stage_error("louvain", "graph carries no edge weight");
  const LevelGraph base = LevelGraph::from(graph);

  Partition best;
  for (int r = 1; r <= runs; ++r) {
    Partition p = run_louvain(base, seed + static_cast<std::uint64_t>(r));
    p.quality = modularity(graph, p);
    if (r == 1 || p.quality > best.quality) best = std::move(p);
  }
  return best;
}

Partition force_bipartition(const WeightedGraph& graph, const Partition& partition) {
  const int k = partition.n_communities;
  if (partition.size() != graph.n) throw stage_error("force_bipartition", "partition does not cover the graph");
  if (k < 2) throw stage_error("force_bipartition", "partition needs at least 2 communities");
  if (k > kMaxBipartitionCommunities)
    throw stage_error("force_bipartition",
                      fmt::format("{} communities exceed the exhaustive limit of {}", k, kMaxBipartitionCommunities));
  if (graph.total_weight() <= 0) throw stage_error("force_bipartition", "graph carries no edge weight");

  // Exact integer objective: 4W^2 * Q = 4W^2 - 4W * cut - D0^2 - D1^2.
  using Wide = __int128;
  const auto K = static_cast<std::size_t>(k);
  std::vector<std::int64_t> between(K * K, 0), degree(K, 0);
  std::int64_t W = 0;
  for (const auto& e : graph.edges) {
    const auto a = static_cast<std::size_t>(partition.labels[static_cast<std::size_t>(e.u)]);
    const auto b = static_cast<std::size_t>(partition.labels[static_cast<std::size_t>(e.v)]);
    W += e.weight;
    degree[a] += e.weight;
    degree[b] += e.weight;
    if (a != b) {
      between[a * K + b] += e.weight;
      between[b * K + a] += e.weight;
    }
  }
  std::int64_t total_degree = 2 * W;

  // Gray-code walk over masks of communities 1..k-1, updating cut and D1 per flip.
  const std::uint32_t bits = static_cast<std::uint32_t>(k - 1);
  std::vector<bool> in_one(K, false);
  std::int64_t cut = 0, d1 = 0;
  Wide best_value = 0;
  std::uint32_t best_mask = 0;
  bool have_best = false;
  for (std::uint32_t g = 1; g < (1u << bits); ++g) {
    const auto c = static_cast<std::size_t>(std::countr_zero(g)) + 1;
    const std::uint32_t mask = g ^ (g >> 1);
    std::int64_t same = 0, other = 0;
    for (std::size_t j = 0; j < K; ++j) {
      if (j == c) continue;
      (in_one[j] == in_one[c] ? same : other) += between[c * K + j];
    }
    cut += same - other;
    in_one[c] = !in_one[c];
    d1 += in_one[c] ? degree[c] : -degree[c];

    const std::int64_t d0 = total_degree - d1;
    const Wide value = Wide(4) * W * W - Wide(4) * W * cut - Wide(d0) * d0 - Wide(d1) * d1;
    if (!have_best || value > best_value || (value == best_value && mask < best_mask)) {
      best_value = value;
      best_mask = mask;
      have_best = true;
    }
  }

  std::vector<Label> labels(graph.n);
  for (std::size_t i = 0; i < graph.n; ++i) {
    const auto c = static_cast<std::uint32_t>(partition.labels[i]);
    labels[i] = (c > 0 && ((best_mask >> (c - 1)) & 1u)) ? 1 : 0;
  }
  Partition out = Partition::from_labels(labels);
  out.source_scale = partition.source_scale;
  out.quality = modularity(graph, out);
  return out;
}

void write_partition_csv(const std::filesystem::path& path, const Partition& partition,
                         std::span<const std::int64_t> ids) {
  if (ids.size() != partition.size()) throw stage_error("export", "partition and id list sizes differ");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(fmt::format("cannot write '{}'", path.string()));
  out << "location_id,community\n";
  for (std::size_t i = 0; i < partition.size(); ++i) out << ids[i] << ',' << partition.labels[i] << '\n';
}

Partition read_partition_csv(const std::filesystem::path& path, std::span<const std::int64_t> ids) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error(fmt::format("cannot read '{}'", path.string()));
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);

  std::vector<Label> labels(ids.size(), -1);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (++line_no == 1 || detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    if (!fields || fields->size() != 2) throw input_error(fmt::format("'{}' line {}: malformed row", path.string(), line_no));
    auto id = detail::parse_int((*fields)[0]);
    auto c = detail::parse_int((*fields)[1]);
    if (!id || !c || !index.contains(*id) || *c < 0)
      throw input_error(fmt::format("'{}' line {}: unknown location or bad community", path.string(), line_no));
    labels[index[*id]] = static_cast<Label>(*c);
  }
  if (std::find(labels.begin(), labels.end(), -1) != labels.end())
    throw input_error(fmt::format("'{}': partition does not cover every location", path.string()));
  return Partition::from_labels(labels);
}

}  // namespace natscale
