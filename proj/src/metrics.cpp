#include "qv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "qv/error.hpp"
#include "qv/numeric.hpp"

namespace qv {

void SamplingConfig::validate() const {
  if (fanouts.empty()) throw ValidationError("sampling config needs >= 1 hop");
  for (std::uint32_t l : fanouts) {
    if (l < 1) throw ValidationError("fanouts must be >= 1");
  }
}

namespace {

// y[i] = sum over out-edges of i of delta(i, e) * x[col(e)].
// Reduction order within a row is the CSR edge order, so the result does
// not depend on the thread count.
template <bool Parallel>
void stochastic_matvec(const TransitionView& t, const double* x, double* y) {
  const Graph& g = *t.graph;
  const auto n = static_cast<std::int64_t>(g.node_count);
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    double inv = t.row_sums[i] > 0.0 ? 1.0 / t.row_sums[i] : 0.0;
    NeumaierSum acc;
    for (EdgeIdx e = g.row_offsets[i]; e < g.row_offsets[i + 1]; ++e) {
      acc.add(g.edge_weights[e] * inv * x[g.col_indices[e]]);
    }
    y[i] = acc.value();
  }
}

// p_out[i] = sum over in-edges (j -> i) of p_in[j] * delta_1(j, i), gathered
// on the transpose so rows stay independent.
template <bool Parallel>
void distribution_step(const Graph& transpose, const std::vector<double>& src_row_sums,
                       const double* p_in, double* p_out) {
  const auto n = static_cast<std::int64_t>(transpose.node_count);
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    NeumaierSum acc;
    for (EdgeIdx e = transpose.row_offsets[i]; e < transpose.row_offsets[i + 1];
         ++e) {
      NodeId j = transpose.col_indices[e];
      if (src_row_sums[j] > 0.0) {
        acc.add(p_in[j] * transpose.edge_weights[e] / src_row_sums[j]);
      }
    }
    p_out[i] = acc.value();
  }
}

template <bool Parallel>
PsgsTable compute_psgs_impl(const TransitionView& t, const SamplingConfig& cfg) {
  cfg.validate();
  const Graph& g = *t.graph;
  const std::uint64_t n = g.node_count;
  const std::size_t hops = cfg.hops();

  // m_k[j] = min(outdeg(j), l_k) with outdeg counting distinct neighbors.
  auto fanout_caps = [&](std::size_t k) {
    std::vector<double> m(n);
    for (std::uint64_t j = 0; j < n; ++j) {
      m[j] = static_cast<double>(
          std::min<std::uint64_t>(t.distinct_out[j], cfg.fanouts[k]));
    }
    return m;
  };

  // Horner nesting m_1 + A(m_2 + A(m_3 + ...)) costs K mat-vecs instead of
  // explicit powers of A.
  std::vector<double> acc = fanout_caps(hops - 1);
  std::vector<double> tmp(n);
  for (std::size_t k = hops - 1; k-- > 0;) {
    stochastic_matvec<Parallel>(t, acc.data(), tmp.data());
    std::vector<double> m = fanout_caps(k);
    for (std::uint64_t i = 0; i < n; ++i) acc[i] = m[i] + tmp[i];
  }

  PsgsTable table;
  table.config = cfg;
  table.values.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) table.values[i] = 1.0 + acc[i];
  return table;
}

template <bool Parallel>
FapTable compute_fap_impl(const TransitionView& t, std::uint32_t hops,
                          std::optional<std::span<const double>> seed_dist) {
  const Graph& g = *t.graph;
  const std::uint64_t n = g.node_count;

  std::vector<double> p0;
  if (seed_dist) {
    if (seed_dist->size() != n) {
      throw ValidationError("seed distribution size does not match node count");
    }
    NeumaierSum total;
    for (double v : *seed_dist) {
      if (!(v >= 0.0)) throw ValidationError("seed distribution has negative mass");
      total.add(v);
    }
    if (std::abs(total.value() - 1.0) > 1e-12) {
      throw ValidationError("seed distribution does not sum to 1");
    }
    p0.assign(seed_dist->begin(), seed_dist->end());
  } else {
    p0.assign(n, 1.0 / static_cast<double>(n));
  }

  FapTable table;
  table.hops = hops;
  table.seed_distribution = p0;
  table.values = p0;  // hop-0 term

  Graph transpose = in_adjacency(g);
  std::vector<double> cur = p0;
  std::vector<double> next(n);
  for (std::uint32_t k = 1; k <= hops; ++k) {
    distribution_step<Parallel>(transpose, t.row_sums, cur.data(), next.data());
    for (std::uint64_t i = 0; i < n; ++i) table.values[i] += next[i];
    cur.swap(next);
  }
  return table;
}

template <bool Parallel>
AccessProbTable compute_access_prob_ie_impl(const Graph& g,
                                            const TransitionView& t,
                                            std::uint32_t layers) {
  if (layers < 1) throw ValidationError("access probability needs layers >= 1");
  const std::uint64_t n = g.node_count;

  AccessProbTable table;
  table.layers = layers;
  table.values.assign(n, 1.0 / static_cast<double>(n));

  Graph transpose = in_adjacency(g);
  std::vector<double> prev(n);
  const auto nn = static_cast<std::int64_t>(n);
  for (std::uint32_t j = 2; j <= layers; ++j) {
    prev = table.values;
#pragma omp parallel for schedule(static) if (Parallel)
    for (std::int64_t i = 0; i < nn; ++i) {
      double miss_all = 1.0;
      EdgeIdx e = transpose.row_offsets[i];
      const EdgeIdx end = transpose.row_offsets[i + 1];
      // Transpose rows are sorted by source, so parallel edges from the
      // same in-neighbor sit adjacent and can be coalesced into one factor.
      while (e < end) {
        NodeId s = transpose.col_indices[e];
        double w = transpose.edge_weights[e];
        ++e;
        while (e < end && transpose.col_indices[e] == s) {
          w += transpose.edge_weights[e];
          ++e;
        }
        if (t.row_sums[s] > 0.0) {
          miss_all *= 1.0 - prev[s] * (w / t.row_sums[s]);
        }
      }
      table.values[i] = prev[i] + (1.0 - prev[i]) * (1.0 - miss_all);
    }
  }
  return table;
}

}  // namespace

PsgsTable compute_psgs(const TransitionView& t, const SamplingConfig& cfg) {
  return compute_psgs_impl<true>(t, cfg);
}
FapTable compute_fap(const TransitionView& t, std::uint32_t hops,
                     std::optional<std::span<const double>> seed_dist) {
  return compute_fap_impl<true>(t, hops, seed_dist);
}
AccessProbTable compute_access_prob_ie(const Graph& g, const TransitionView& t,
                                       std::uint32_t layers) {
  return compute_access_prob_ie_impl<true>(g, t, layers);
}

namespace serial {
PsgsTable compute_psgs(const TransitionView& t, const SamplingConfig& cfg) {
  return compute_psgs_impl<false>(t, cfg);
}
FapTable compute_fap(const TransitionView& t, std::uint32_t hops,
                     std::optional<std::span<const double>> seed_dist) {
  return compute_fap_impl<false>(t, hops, seed_dist);
}
AccessProbTable compute_access_prob_ie(const Graph& g, const TransitionView& t,
                                       std::uint32_t layers) {
  return compute_access_prob_ie_impl<false>(g, t, layers);
}
}  // namespace serial

namespace {
constexpr char kTabMagic[6] = {'Q', 'V', 'T', 'A', 'B', '1'};
}

void save_table_binary(const std::string& path, std::span<const double> values,
                       std::uint64_t k) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write table file: " + path);
  out.write(kTabMagic, 6);
  std::uint64_t n = values.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&k), sizeof k);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw Error("short write to " + path);
}

LoadedTable load_table_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open table file: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kTabMagic, 6) != 0) {
    throw ParseError(path + ": bad magic, not a QVTAB1 file");
  }
  std::uint64_t n = 0;
  LoadedTable t;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&t.k), sizeof t.k);
  if (!in) throw ParseError(path + ": truncated table header");
  t.values.resize(n);
  in.read(reinterpret_cast<char*>(t.values.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ParseError(path + ": truncated table values");
  return t;
}

void save_table_csv(const std::string& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write csv file: " + path);
  out << "node_id,value\n";
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, values[i]);
    out << buf;
  }
  if (!out) throw Error("short write to " + path);
}

TableSummary summarize_table(std::span<const double> values, std::size_t top_k) {
  TableSummary s;
  if (values.empty()) return s;
  s.min = values[0];
  s.max = values[0];
  NeumaierSum total;
  for (double v : values) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    total.add(v);
  }
  s.mean = total.value() / static_cast<double>(values.size());
  std::vector<std::pair<NodeId, double>> order(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    order[i] = {static_cast<NodeId>(i), values[i]};
  }
  // Hottest first; id breaks ties so the summary is reproducible.
  std::partial_sort(order.begin(),
                    order.begin() + std::min(top_k, order.size()), order.end(),
                    [](const auto& a, const auto& b) {
                      if (a.second != b.second) return a.second > b.second;
                      return a.first < b.first;
                    });
  order.resize(std::min(top_k, order.size()));
  s.hottest = std::move(order);
  return s;
}

}  // namespace qv
