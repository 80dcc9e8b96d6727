#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qv/graph.hpp"
#include "qv/metrics.hpp"

namespace qv {

// One k-hop expansion from a seed. Frontiers hold node instances: the same
// node sampled via two branches appears twice, matching the path-sum
// semantics of the analytic subgraph-size metric.
struct SampleResult {
  NodeId seed = 0;
  std::vector<std::vector<NodeId>> frontiers;  // index 0 is {seed}
  std::vector<std::uint64_t> instance_counts;  // per hop
  std::vector<NodeId> unique_nodes;            // sorted, across all hops

  std::uint64_t total_instances() const {
    std::uint64_t n = 0;
    for (std::uint64_t c : instance_counts) n += c;
    return n;
  }
};

// Weighted k-hop neighbor sampling without replacement. Each frontier
// instance j draws min(outdeg(j), l_k) distinct out-neighbors with
// probability proportional to edge weight. Deterministic given rng_seed.
SampleResult sample_khop(const TransitionView& t, NodeId seed,
                         const SamplingConfig& cfg, std::uint64_t rng_seed);

struct BatchSampleStats {
  std::uint64_t total_instances = 0;
  std::uint64_t unique_count = 0;
  std::vector<NodeId> unique_nodes;  // sorted union
};

struct BatchSampleResult {
  std::vector<SampleResult> per_seed;
  BatchSampleStats stats;
};

// Element-wise sample_khop. Per-seed streams are keyed on the seed node id,
// so results are independent of seed order and worker count, and duplicate
// seeds in one batch yield identical per-seed results.
BatchSampleResult batch_sample(const TransitionView& t,
                               std::span<const NodeId> seeds,
                               const SamplingConfig& cfg,
                               std::uint64_t rng_seed);

}  // namespace qv
