#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qv/graph.hpp"
#include "qv/metrics.hpp"

namespace qv {

// Monte-Carlo estimate of the expected sampled-tree size (node instances
// over hops 0..K) from one seed. unique_mean counts distinct nodes per
// trial; it is a diagnostic, the instance mean is what the analytic table
// models. Exact in expectation for fanout-1 configurations, where the
// sampler collapses to a single transition-weighted walk per hop level.
struct PsgsMcEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double unique_mean = 0.0;
  std::uint64_t trials = 0;
};

PsgsMcEstimate psgs_oracle_mc(const Graph& g, const SamplingConfig& cfg,
                              NodeId node, std::uint64_t trials,
                              std::uint64_t rng_seed);

// K-step random walks from seeds drawn from seed_dist (uniform default).
// mean[n] estimates the expected visit count of n across steps 0..K, which
// is exactly what the analytic visit-mass table computes. Walks stop at
// zero-out-degree nodes.
struct FapMcResult {
  std::vector<double> mean;
  std::vector<double> std_error;
  std::uint64_t trials = 0;
};

FapMcResult fap_oracle_mc(const Graph& g, std::uint32_t hops,
                          std::uint64_t trials, std::uint64_t rng_seed,
                          std::optional<std::span<const double>> seed_dist = {});

}  // namespace qv
