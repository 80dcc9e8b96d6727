#include "qv/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "qv/error.hpp"
#include "qv/rng.hpp"

namespace qv {

namespace {

struct Candidate {
  NodeId node;
  double weight;
};

// Draws m = min(#positive-weight candidates, fanout) distinct candidates,
// weighted, without replacement, using exponential keys: key = Exp(1)/w,
// smallest keys win. Selected nodes are appended in candidate order.
void draw_without_replacement(std::span<const Candidate> cands,
                              std::uint32_t fanout, RngStream& rng,
                              std::vector<NodeId>& out) {
  std::size_t positive = 0;
  for (const Candidate& c : cands) {
    if (c.weight > 0.0) ++positive;
  }
  std::size_t m = std::min<std::size_t>(positive, fanout);
  if (m == 0) return;

  if (m == positive) {
    // Every positive-weight neighbor is taken; no randomness involved.
    for (const Candidate& c : cands) {
      if (c.weight > 0.0) out.push_back(c.node);
    }
    return;
  }

  thread_local std::vector<std::pair<double, std::size_t>> keys;
  keys.clear();
  for (std::size_t idx = 0; idx < cands.size(); ++idx) {
    // One draw per candidate, in order, so the stream consumption is fixed.
    double e = rng.exponential();
    if (cands[idx].weight > 0.0) keys.emplace_back(e / cands[idx].weight, idx);
  }
  std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(m - 1),
                   keys.end());
  keys.resize(m);
  std::sort(keys.begin(), keys.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  for (const auto& [key, idx] : keys) out.push_back(cands[idx].node);
}

}  // namespace

SampleResult sample_khop(const TransitionView& t, NodeId seed,
                         const SamplingConfig& cfg, std::uint64_t rng_seed) {
  cfg.validate();
  const Graph& g = *t.graph;
  if (seed >= g.node_count) {
    throw ValidationError("sample seed " + std::to_string(seed) +
                          " out of range");
  }

  SampleResult r;
  r.seed = seed;
  r.frontiers.resize(cfg.hops() + 1);
  r.frontiers[0] = {seed};

  std::vector<Candidate> cands;
  for (std::size_t k = 1; k <= cfg.hops(); ++k) {
    const auto& parents = r.frontiers[k - 1];
    auto& frontier = r.frontiers[k];
    for (std::size_t idx = 0; idx < parents.size(); ++idx) {
      NodeId p = parents[idx];
      cands.clear();
      if (t.has_parallel_edges) {
        // Coalesce parallel edges so a neighbor is one candidate with its
        // accumulated weight.
        for (EdgeIdx e = g.row_offsets[p]; e < g.row_offsets[p + 1]; ++e) {
          NodeId j = g.col_indices[e];
          bool merged = false;
          for (Candidate& c : cands) {
            if (c.node == j) {
              c.weight += g.edge_weights[e];
              merged = true;
              break;
            }
          }
          if (!merged) cands.push_back({j, g.edge_weights[e]});
        }
      } else {
        for (EdgeIdx e = g.row_offsets[p]; e < g.row_offsets[p + 1]; ++e) {
          cands.push_back({g.col_indices[e], g.edge_weights[e]});
        }
      }
      RngStream rng = derive_stream(rng_seed, k, idx, p);
      draw_without_replacement(cands, cfg.fanouts[k - 1], rng, frontier);
    }
  }

  r.instance_counts.resize(r.frontiers.size());
  for (std::size_t k = 0; k < r.frontiers.size(); ++k) {
    r.instance_counts[k] = r.frontiers[k].size();
    r.unique_nodes.insert(r.unique_nodes.end(), r.frontiers[k].begin(),
                          r.frontiers[k].end());
  }
  std::sort(r.unique_nodes.begin(), r.unique_nodes.end());
  r.unique_nodes.erase(std::unique(r.unique_nodes.begin(), r.unique_nodes.end()),
                       r.unique_nodes.end());
  return r;
}

BatchSampleResult batch_sample(const TransitionView& t,
                               std::span<const NodeId> seeds,
                               const SamplingConfig& cfg,
                               std::uint64_t rng_seed) {
  cfg.validate();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (seeds[i] >= t.node_count()) {
      throw ValidationError("batch seed at position " + std::to_string(i) +
                            " (node " + std::to_string(seeds[i]) +
                            ") out of range");
    }
  }

  BatchSampleResult out;
  out.per_seed.resize(seeds.size());
  const auto n = static_cast<std::int64_t>(seeds.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < n; ++i) {
    // Keyed on the seed node id, not the position: duplicated seeds give
    // identical results and order never matters.
    out.per_seed[i] =
        sample_khop(t, seeds[i], cfg, splitmix64(rng_seed ^ seeds[i] * 0x9e3779b97f4a7c15ULL));
  }

  for (const SampleResult& r : out.per_seed) {
    out.stats.total_instances += r.total_instances();
    out.stats.unique_nodes.insert(out.stats.unique_nodes.end(),
                                  r.unique_nodes.begin(), r.unique_nodes.end());
  }
  std::sort(out.stats.unique_nodes.begin(), out.stats.unique_nodes.end());
  out.stats.unique_nodes.erase(std::unique(out.stats.unique_nodes.begin(),
                                           out.stats.unique_nodes.end()),
                               out.stats.unique_nodes.end());
  out.stats.unique_count = out.stats.unique_nodes.size();
  return out;
}

}  // namespace qv
