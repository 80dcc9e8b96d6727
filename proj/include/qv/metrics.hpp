#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qv/graph.hpp"

namespace qv {

// Per-hop maximum sample sizes l_1..l_K.
struct SamplingConfig {
  std::vector<std::uint32_t> fanouts;

  std::size_t hops() const { return fanouts.size(); }
  void validate() const;
};

// Expected sampled-subgraph size per seed node:
//   Q[i] = 1 + sum_{k=1..K} sum_j min(outdeg(j), l_k) * delta_{k-1}(i, j)
// with delta_0 the identity. Values count node instances along sampling
// paths, not unique nodes.
struct PsgsTable {
  std::vector<double> values;
  SamplingConfig config;
};

// Probability mass of a node being visited within K hops of a random seed:
//   P[i] = sum_{k=0..K} (seed_dist composed with delta_k)[i]
struct FapTable {
  std::vector<double> values;
  std::uint32_t hops = 0;
  std::vector<double> seed_distribution;
};

// Inclusion-exclusion access probability P(n, j) evaluated exactly:
//   P(n,1) = 1/|V|
//   P(n,j) = P(n,j-1) + (1-P(n,j-1)) *
//            (1 - prod_{s in in(n)} (1 - P(s,j-1) * delta_1(s,n)))
struct AccessProbTable {
  std::vector<double> values;
  std::uint32_t layers = 0;
};

PsgsTable compute_psgs(const TransitionView& t, const SamplingConfig& cfg);

// seed_dist must sum to 1 (1e-12 tolerance); uniform when absent.
FapTable compute_fap(const TransitionView& t, std::uint32_t hops,
                     std::optional<std::span<const double>> seed_dist = {});

AccessProbTable compute_access_prob_ie(const Graph& g, const TransitionView& t,
                                       std::uint32_t layers);

// Serial twins of the OpenMP kernels, kept for testing and benchmarking.
// Same algorithm, no parallel pragmas; outputs are bit-identical.
namespace serial {
PsgsTable compute_psgs(const TransitionView& t, const SamplingConfig& cfg);
FapTable compute_fap(const TransitionView& t, std::uint32_t hops,
                     std::optional<std::span<const double>> seed_dist = {});
AccessProbTable compute_access_prob_ie(const Graph& g, const TransitionView& t,
                                       std::uint32_t layers);
}  // namespace serial

// Table files: "QVTAB1" magic, node_count u64, K u64, then f64 values,
// little-endian. CSV is `node_id,value` with a header.
void save_table_binary(const std::string& path, std::span<const double> values,
                       std::uint64_t k);
struct LoadedTable {
  std::vector<double> values;
  std::uint64_t k = 0;
};
LoadedTable load_table_binary(const std::string& path);
void save_table_csv(const std::string& path, std::span<const double> values);

struct TableSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  std::vector<std::pair<NodeId, double>> hottest;  // top-k by value
};
TableSummary summarize_table(std::span<const double> values, std::size_t top_k);

}  // namespace qv
