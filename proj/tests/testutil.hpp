#pragma once

// Shared fixtures and independent oracles for the test suites. The dense
// oracles evaluate the metric definitions with explicit matrix powers and
// never touch the sparse kernels they check.

#include <cstdint>
#include <vector>

#include "qv/graph.hpp"
#include "qv/metrics.hpp"
#include "qv/rng.hpp"

namespace qvtest {

using namespace qv;

// Worked subgraph-size example: node 3 has two equal-weight out-neighbors,
// one of which (node 0) has a single onward edge while the other is a sink.
// With fanouts [1, 1]: Q[3] = 1 + 1 + 1/2.
inline Graph fig5_graph() {
  std::vector<Edge> edges = {
      {3, 0, 1.0}, {3, 1, 1.0}, {0, 2, 1.0}, {4, 5, 1.0}};
  return Graph::from_edges(6, edges);
}

// Worked access-probability example, 6 nodes, equal edge weights. Node 3's
// in-neighbors are node 0 (two out-edges, transition 1/2) and node 1 (single
// out-edge, transition 1); node 4 feeds node 0 with transition 1 and node 1
// has no in-edges, so the only length-2 arrival at node 3 is 4 -> 0 -> 3.
// Uniform seeds over 6 nodes give visit mass 1/6 + 1/4 + 1/12 = 1/2 at K=2.
inline Graph fig8_graph() {
  std::vector<Edge> edges = {
      {0, 3, 1.0}, {0, 5, 1.0}, {1, 3, 1.0}, {3, 2, 1.0}, {4, 0, 1.0}};
  return Graph::from_edges(6, edges);
}

inline Graph chain3() {
  std::vector<Edge> edges = {{0, 1, 1.0}, {1, 2, 1.0}};
  return Graph::from_edges(3, edges);
}

inline Graph random_graph(RngStream& rng, std::uint64_t max_nodes = 50,
                          std::uint64_t max_edges = 300,
                          bool weighted = true) {
  std::uint64_t n = 2 + rng.below(max_nodes - 1);
  std::uint64_t m = 1 + rng.below(max_edges);
  std::vector<Edge> edges;
  edges.reserve(m);
  for (std::uint64_t e = 0; e < m; ++e) {
    edges.push_back({rng.below(n), rng.below(n),
                     weighted ? 0.25 + rng.uniform() : 1.0});
  }
  return Graph::from_edges(n, edges);
}

// Dense row-stochastic transition matrix (parallel edges accumulate).
inline std::vector<std::vector<double>> dense_transition(const Graph& g) {
  std::uint64_t n = g.node_count;
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  for (NodeId i = 0; i < n; ++i) {
    double sum = 0.0;
    for (double w : g.weights(i)) sum += w;
    if (sum <= 0.0) continue;
    for (EdgeIdx e = g.row_offsets[i]; e < g.row_offsets[i + 1]; ++e) {
      a[i][g.col_indices[e]] += g.edge_weights[e] / sum;
    }
  }
  return a;
}

inline std::vector<std::vector<double>> dense_multiply(
    const std::vector<std::vector<double>>& x,
    const std::vector<std::vector<double>>& y) {
  std::size_t n = x.size();
  std::vector<std::vector<double>> z(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (x[i][k] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) z[i][j] += x[i][k] * y[k][j];
    }
  }
  return z;
}

// Dense matrix-power subgraph-size oracle:
// Q[i] = 1 + sum_k sum_j A^{k-1}[i][j] * min(distinct_outdeg(j), l_k).
inline std::vector<double> dense_psgs(const Graph& g, const SamplingConfig& cfg) {
  std::uint64_t n = g.node_count;
  auto a = dense_transition(g);
  TransitionView t = transition_view(g);

  std::vector<std::vector<double>> power(n, std::vector<double>(n, 0.0));
  for (std::uint64_t i = 0; i < n; ++i) power[i][i] = 1.0;  // delta_0

  std::vector<double> q(n, 1.0);
  for (std::size_t k = 1; k <= cfg.hops(); ++k) {
    std::vector<double> m(n);
    for (std::uint64_t j = 0; j < n; ++j) {
      m[j] = static_cast<double>(
          std::min<std::uint64_t>(t.distinct_out[j], cfg.fanouts[k - 1]));
    }
    for (std::uint64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::uint64_t j = 0; j < n; ++j) s += power[i][j] * m[j];
      q[i] += s;
    }
    if (k < cfg.hops()) power = dense_multiply(power, a);
  }
  return q;
}

// Dense visit-mass oracle: seed^T * sum_{k=0..K} A^k.
inline std::vector<double> dense_fap(const Graph& g, std::uint32_t hops,
                                     const std::vector<double>& seed) {
  std::uint64_t n = g.node_count;
  auto a = dense_transition(g);
  std::vector<double> p = seed;
  std::vector<double> total = seed;
  for (std::uint32_t k = 1; k <= hops; ++k) {
    std::vector<double> next(n, 0.0);
    for (std::uint64_t j = 0; j < n; ++j) {
      if (p[j] == 0.0) continue;
      for (std::uint64_t i = 0; i < n; ++i) next[i] += p[j] * a[j][i];
    }
    for (std::uint64_t i = 0; i < n; ++i) total[i] += next[i];
    p = std::move(next);
  }
  return total;
}

// Per-hop mass vectors p_k, for the per-hop conservation checks.
inline std::vector<std::vector<double>> dense_fap_hops(
    const Graph& g, std::uint32_t hops, const std::vector<double>& seed) {
  std::uint64_t n = g.node_count;
  auto a = dense_transition(g);
  std::vector<std::vector<double>> out;
  std::vector<double> p = seed;
  out.push_back(p);
  for (std::uint32_t k = 1; k <= hops; ++k) {
    std::vector<double> next(n, 0.0);
    for (std::uint64_t j = 0; j < n; ++j) {
      for (std::uint64_t i = 0; i < n; ++i) next[i] += p[j] * a[j][i];
    }
    out.push_back(next);
    p = std::move(next);
  }
  return out;
}

// Straight-line re-implementation of the inclusion-exclusion recursion on
// the dense transition matrix, written directly from the definition.
inline std::vector<double> straightline_access_prob(const Graph& g,
                                                    std::uint32_t layers) {
  std::uint64_t n = g.node_count;
  auto r = dense_transition(g);
  std::vector<double> p(n, 1.0 / static_cast<double>(n));
  for (std::uint32_t j = 2; j <= layers; ++j) {
    std::vector<double> prev = p;
    for (std::uint64_t node = 0; node < n; ++node) {
      double prod = 1.0;
      for (std::uint64_t s = 0; s < n; ++s) {
        if (r[s][node] > 0.0) prod *= 1.0 - prev[s] * r[s][node];
      }
      p[node] = prev[node] + (1.0 - prev[node]) * (1.0 - prod);
    }
  }
  return p;
}

// Number of directed paths of length exactly k starting at `from`, counted
// by brute-force expansion (fanouts at least the max degree make the
// sampler's hop-k instance count equal this).
inline std::uint64_t path_count(const Graph& g, NodeId from, std::uint32_t k) {
  std::vector<std::uint64_t> cur(g.node_count, 0);
  cur[from] = 1;
  for (std::uint32_t step = 0; step < k; ++step) {
    std::vector<std::uint64_t> next(g.node_count, 0);
    for (NodeId i = 0; i < g.node_count; ++i) {
      if (cur[i] == 0) continue;
      for (NodeId j : g.neighbors(i)) next[j] += cur[i];
    }
    cur = std::move(next);
  }
  std::uint64_t total = 0;
  for (auto c : cur) total += c;
  return total;
}

}  // namespace qvtest
