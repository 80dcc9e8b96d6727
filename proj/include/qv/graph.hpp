#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qv {

using NodeId = std::uint64_t;
using EdgeIdx = std::uint64_t;

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  double weight = 1.0;
};

enum class GraphFormat { edge_list_text, csr_binary };

// Immutable directed weighted graph in CSR form. Node ids are dense
// 0..node_count-1 so every per-node table is a flat array. Parallel edges
// are kept as loaded; their weights accumulate only when transition
// probabilities are formed.
struct Graph {
  std::uint64_t node_count = 0;
  std::uint64_t edge_count = 0;
  std::vector<EdgeIdx> row_offsets;   // node_count + 1, non-decreasing
  std::vector<NodeId> col_indices;    // edge_count
  std::vector<double> edge_weights;   // edge_count, all >= 0

  static Graph from_edges(std::uint64_t node_count, std::span<const Edge> edges);

  std::uint64_t out_degree(NodeId i) const {
    return row_offsets[i + 1] - row_offsets[i];
  }
  std::span<const NodeId> neighbors(NodeId i) const {
    return {col_indices.data() + row_offsets[i],
            col_indices.data() + row_offsets[i + 1]};
  }
  std::span<const double> weights(NodeId i) const {
    return {edge_weights.data() + row_offsets[i],
            edge_weights.data() + row_offsets[i + 1]};
  }

  // Throws ValidationError when any CSR invariant is broken.
  void validate() const;
};

struct DegreeStats {
  std::uint64_t min_out = 0;
  std::uint64_t max_out = 0;
  double mean_out = 0.0;
  std::uint64_t zero_out_nodes = 0;
};

DegreeStats degree_stats(const Graph& g);

// Loads a graph from disk.
//   edge-list-text: one `src dst [weight]` per line, '#' starts a comment,
//                   missing weight defaults to 1.0.
//   csr-binary:     "QVCSR1" header, little-endian u64/f64 arrays.
// Ids must be dense 0-based; with remap_sparse_ids the loader densifies
// sparse ids by ascending original id instead of rejecting them.
Graph load_graph(const std::string& path, GraphFormat format,
                 bool remap_sparse_ids = false);

void save_graph_csr(const Graph& g, const std::string& path);

// Transpose: edge (i -> j, w) becomes (j -> i, w). Applying it twice
// restores the original edge multiset.
Graph in_adjacency(const Graph& g);

// Row-stochastic view of a graph: delta(i, e) = w_e / row_sum(i) for rows
// with out-degree > 0; zero-out-degree rows are absorbing (all-zero).
struct TransitionView {
  const Graph* graph = nullptr;
  std::vector<double> row_sums;            // 0 for zero-out-degree rows
  std::vector<std::uint64_t> distinct_out; // out-neighbor set sizes
  bool has_parallel_edges = false;

  std::uint64_t node_count() const { return graph->node_count; }

  // Edge-level transition probability for edge index e out of node i.
  double edge_prob(NodeId i, EdgeIdx e) const {
    return row_sums[i] > 0.0 ? graph->edge_weights[e] / row_sums[i] : 0.0;
  }

  // delta_1(i, j): accumulates parallel edges. Linear in out-degree.
  double prob(NodeId i, NodeId j) const;
};

TransitionView transition_view(const Graph& g);

}  // namespace qv
