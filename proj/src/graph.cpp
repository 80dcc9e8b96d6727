#include "qv/graph.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "qv/error.hpp"

namespace qv {

namespace {

Graph build_csr(std::uint64_t node_count, std::span<const Edge> edges) {
  Graph g;
  g.node_count = node_count;
  g.edge_count = edges.size();
  g.row_offsets.assign(node_count + 1, 0);
  for (const Edge& e : edges) {
    if (e.src >= node_count || e.dst >= node_count) {
      throw ValidationError("edge endpoint " +
                            std::to_string(std::max(e.src, e.dst)) +
                            " out of range for node count " +
                            std::to_string(node_count));
    }
    if (!(e.weight >= 0.0)) {
      throw ValidationError("negative or NaN edge weight on edge " +
                            std::to_string(e.src) + " -> " +
                            std::to_string(e.dst));
    }
    ++g.row_offsets[e.src + 1];
  }
  std::partial_sum(g.row_offsets.begin(), g.row_offsets.end(),
                   g.row_offsets.begin());
  g.col_indices.resize(g.edge_count);
  g.edge_weights.resize(g.edge_count);
  std::vector<EdgeIdx> cursor(g.row_offsets.begin(), g.row_offsets.end() - 1);
  for (const Edge& e : edges) {
    EdgeIdx at = cursor[e.src]++;
    g.col_indices[at] = e.dst;
    g.edge_weights[at] = e.weight;
  }
  g.validate();
  return g;
}

}  // namespace

Graph Graph::from_edges(std::uint64_t node_count, std::span<const Edge> edges) {
  if (node_count == 0) {
    throw ValidationError("empty graph: node count is zero");
  }
  return build_csr(node_count, edges);
}

void Graph::validate() const {
  if (node_count == 0) throw ValidationError("empty graph: node count is zero");
  if (row_offsets.size() != node_count + 1) {
    throw ValidationError("row_offsets size mismatch");
  }
  if (row_offsets.front() != 0 || row_offsets.back() != edge_count) {
    throw ValidationError("row_offsets endpoints invalid");
  }
  if (col_indices.size() != edge_count || edge_weights.size() != edge_count) {
    throw ValidationError("edge array size mismatch");
  }
  for (std::uint64_t i = 0; i < node_count; ++i) {
    if (row_offsets[i + 1] < row_offsets[i]) {
      throw ValidationError("row_offsets not non-decreasing at node " +
                            std::to_string(i));
    }
  }
  for (std::uint64_t i = 0; i < node_count; ++i) {
    bool any_positive = out_degree(i) == 0;
    for (EdgeIdx e = row_offsets[i]; e < row_offsets[i + 1]; ++e) {
      if (col_indices[e] >= node_count) {
        throw ValidationError("column index out of range at node " +
                              std::to_string(i));
      }
      if (!(edge_weights[e] >= 0.0)) {
        throw ValidationError("negative or NaN edge weight at node " +
                              std::to_string(i));
      }
      if (edge_weights[e] > 0.0) any_positive = true;
    }
    if (!any_positive) {
      throw ValidationError("node " + std::to_string(i) +
                            " has out-edges but all weights are zero");
    }
  }
}

DegreeStats degree_stats(const Graph& g) {
  DegreeStats s;
  s.min_out = g.node_count ? g.out_degree(0) : 0;
  for (std::uint64_t i = 0; i < g.node_count; ++i) {
    std::uint64_t d = g.out_degree(i);
    s.min_out = std::min(s.min_out, d);
    s.max_out = std::max(s.max_out, d);
    if (d == 0) ++s.zero_out_nodes;
  }
  s.mean_out = g.node_count
                   ? static_cast<double>(g.edge_count) / static_cast<double>(g.node_count)
                   : 0.0;
  return s;
}

namespace {

Graph load_edge_list(const std::string& path, bool remap_sparse_ids) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file: " + path);

  std::vector<Edge> edges;
  std::string line;
  std::uint64_t line_no = 0;
  NodeId max_id = 0;
  bool any_edge = false;

  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::uint64_t src, dst;
    if (!(ls >> src)) {
      // Blank or comment-only line.
      std::string leftover;
      std::istringstream probe(line);
      if (probe >> leftover) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": malformed edge line: '" + line + "'");
      }
      continue;
    }
    double w = 1.0;
    if (!(ls >> dst)) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": malformed edge line: '" + line + "'");
    }
    std::string rest;
    if (ls >> rest) {
      try {
        std::size_t used = 0;
        w = std::stod(rest, &used);
        if (used != rest.size()) throw std::invalid_argument(rest);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": malformed weight '" + rest + "'");
      }
      std::string extra;
      if (ls >> extra) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": trailing tokens after weight: '" + extra + "'");
      }
    }
    edges.push_back({src, dst, w});
    max_id = std::max(max_id, std::max(src, dst));
    any_edge = true;
  }

  if (!any_edge) throw ValidationError("empty graph: no edges in " + path);

  std::uint64_t node_count = max_id + 1;
  std::vector<bool> present(node_count, false);
  for (const Edge& e : edges) {
    present[e.src] = true;
    present[e.dst] = true;
  }
  bool contiguous =
      std::all_of(present.begin(), present.end(), [](bool b) { return b; });

  if (!contiguous) {
    if (!remap_sparse_ids) {
      throw ValidationError(
          path + ": node ids are not contiguous 0..N-1 (use id remapping "
                 "for sparse-id inputs)");
    }
    // Densify by ascending original id so the mapping is reproducible.
    std::vector<NodeId> remap(node_count, 0);
    NodeId next = 0;
    for (NodeId i = 0; i < node_count; ++i) {
      if (present[i]) remap[i] = next++;
    }
    for (Edge& e : edges) {
      e.src = remap[e.src];
      e.dst = remap[e.dst];
    }
    node_count = next;
  }

  return Graph::from_edges(node_count, edges);
}

constexpr char kCsrMagic[6] = {'Q', 'V', 'C', 'S', 'R', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(sizeof(T) * count));
}

template <typename T>
void read_pod(std::ifstream& in, T* data, std::size_t count,
              const std::string& path) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(sizeof(T) * count));
  if (!in) throw ParseError(path + ": truncated csr-binary file");
}

Graph load_csr_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open graph file: " + path);
  char magic[6];
  read_pod(in, magic, 6, path);
  if (std::memcmp(magic, kCsrMagic, 6) != 0) {
    throw ParseError(path + ": bad magic, not a QVCSR1 file");
  }
  Graph g;
  read_pod(in, &g.node_count, 1, path);
  read_pod(in, &g.edge_count, 1, path);
  if (g.node_count == 0) throw ValidationError("empty graph in " + path);
  g.row_offsets.resize(g.node_count + 1);
  g.col_indices.resize(g.edge_count);
  g.edge_weights.resize(g.edge_count);
  read_pod(in, g.row_offsets.data(), g.row_offsets.size(), path);
  read_pod(in, g.col_indices.data(), g.col_indices.size(), path);
  read_pod(in, g.edge_weights.data(), g.edge_weights.size(), path);
  g.validate();
  return g;
}

}  // namespace

Graph load_graph(const std::string& path, GraphFormat format,
                 bool remap_sparse_ids) {
  switch (format) {
    case GraphFormat::edge_list_text:
      return load_edge_list(path, remap_sparse_ids);
    case GraphFormat::csr_binary:
      return load_csr_binary(path);
  }
  throw ConfigError("unknown graph format");
}

void save_graph_csr(const Graph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write graph file: " + path);
  write_pod(out, kCsrMagic, 6);
  write_pod(out, &g.node_count, 1);
  write_pod(out, &g.edge_count, 1);
  write_pod(out, g.row_offsets.data(), g.row_offsets.size());
  write_pod(out, g.col_indices.data(), g.col_indices.size());
  write_pod(out, g.edge_weights.data(), g.edge_weights.size());
  if (!out) throw Error("short write to " + path);
}

Graph in_adjacency(const Graph& g) {
  g.validate();
  Graph t;
  t.node_count = g.node_count;
  t.edge_count = g.edge_count;
  t.row_offsets.assign(g.node_count + 1, 0);
  for (NodeId j : g.col_indices) ++t.row_offsets[j + 1];
  std::partial_sum(t.row_offsets.begin(), t.row_offsets.end(),
                   t.row_offsets.begin());
  t.col_indices.resize(g.edge_count);
  t.edge_weights.resize(g.edge_count);
  std::vector<EdgeIdx> cursor(t.row_offsets.begin(), t.row_offsets.end() - 1);
  // Iterating rows in order keeps each transpose row sorted by source.
  for (NodeId i = 0; i < g.node_count; ++i) {
    for (EdgeIdx e = g.row_offsets[i]; e < g.row_offsets[i + 1]; ++e) {
      EdgeIdx at = cursor[g.col_indices[e]]++;
      t.col_indices[at] = i;
      t.edge_weights[at] = g.edge_weights[e];
    }
  }
  return t;
}

double TransitionView::prob(NodeId i, NodeId j) const {
  if (row_sums[i] <= 0.0) return 0.0;
  double w = 0.0;
  for (EdgeIdx e = graph->row_offsets[i]; e < graph->row_offsets[i + 1]; ++e) {
    if (graph->col_indices[e] == j) w += graph->edge_weights[e];
  }
  return w / row_sums[i];
}

TransitionView transition_view(const Graph& g) {
  g.validate();
  TransitionView t;
  t.graph = &g;
  t.row_sums.assign(g.node_count, 0.0);
  t.distinct_out.assign(g.node_count, 0);

  // Stamp array detects duplicate neighbors in O(E) without sorting rows.
  std::vector<std::uint64_t> stamp(g.node_count, ~0ULL);
  for (NodeId i = 0; i < g.node_count; ++i) {
    double sum = 0.0;
    std::uint64_t distinct = 0;
    for (EdgeIdx e = g.row_offsets[i]; e < g.row_offsets[i + 1]; ++e) {
      sum += g.edge_weights[e];
      NodeId j = g.col_indices[e];
      if (stamp[j] != i) {
        stamp[j] = i;
        ++distinct;
      } else {
        t.has_parallel_edges = true;
      }
    }
    t.row_sums[i] = sum;
    t.distinct_out[i] = distinct;
  }
  return t;
}

}  // namespace qv
