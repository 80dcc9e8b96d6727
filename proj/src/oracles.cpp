#include "qv/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "qv/error.hpp"
#include "qv/rng.hpp"
#include "qv/sampler.hpp"

namespace qv {

PsgsMcEstimate psgs_oracle_mc(const Graph& g, const SamplingConfig& cfg,
                              NodeId node, std::uint64_t trials,
                              std::uint64_t rng_seed) {
  cfg.validate();
  if (trials < 1) throw ValidationError("psgs oracle needs trials >= 1");
  TransitionView t = transition_view(g);

  // Per-trial sizes are integers, so parallel accumulation order cannot
  // change the result.
  std::vector<std::uint64_t> sizes(trials);
  std::vector<std::uint64_t> uniques(trials);
  const auto n = static_cast<std::int64_t>(trials);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    SampleResult r = sample_khop(t, node, cfg, splitmix64(rng_seed ^ (0xd1b54a32d192ed03ULL * (i + 1))));
    sizes[i] = r.total_instances();
    uniques[i] = r.unique_nodes.size();
  }

  unsigned __int128 sum = 0, sumsq = 0, usum = 0;
  for (std::uint64_t i = 0; i < trials; ++i) {
    sum += sizes[i];
    sumsq += static_cast<unsigned __int128>(sizes[i]) * sizes[i];
    usum += uniques[i];
  }

  PsgsMcEstimate est;
  est.trials = trials;
  est.mean = static_cast<double>(sum) / static_cast<double>(trials);
  est.unique_mean = static_cast<double>(usum) / static_cast<double>(trials);
  if (trials > 1) {
    double var = (static_cast<double>(sumsq) -
                  static_cast<double>(trials) * est.mean * est.mean) /
                 static_cast<double>(trials - 1);
    est.std_error = std::sqrt(std::max(var, 0.0) / static_cast<double>(trials));
  }
  return est;
}

namespace {

// Weighted draw from a cumulative scan of edge weights.
NodeId step_walk(const Graph& g, const TransitionView& t, NodeId at,
                 RngStream& rng) {
  double target = rng.uniform() * t.row_sums[at];
  double acc = 0.0;
  EdgeIdx last = g.row_offsets[at + 1] - 1;
  for (EdgeIdx e = g.row_offsets[at]; e <= last; ++e) {
    acc += g.edge_weights[e];
    if (target < acc || e == last) return g.col_indices[e];
  }
  return g.col_indices[last];
}

}  // namespace

FapMcResult fap_oracle_mc(const Graph& g, std::uint32_t hops,
                          std::uint64_t trials, std::uint64_t rng_seed,
                          std::optional<std::span<const double>> seed_dist) {
  if (trials < 1) throw ValidationError("fap oracle needs trials >= 1");
  TransitionView t = transition_view(g);
  const std::uint64_t n = g.node_count;

  std::vector<double> seed_cdf(n);
  {
    double acc = 0.0;
    if (seed_dist) {
      if (seed_dist->size() != n) {
        throw ValidationError("seed distribution size does not match node count");
      }
      for (std::uint64_t i = 0; i < n; ++i) {
        acc += (*seed_dist)[i];
        seed_cdf[i] = acc;
      }
      if (std::abs(acc - 1.0) > 1e-12) {
        throw ValidationError("seed distribution does not sum to 1");
      }
    } else {
      for (std::uint64_t i = 0; i < n; ++i) {
        seed_cdf[i] = static_cast<double>(i + 1) / static_cast<double>(n);
      }
    }
    seed_cdf[n - 1] = 1.0;
  }

  // visit counts and their squares per node, summed over trials. A walk
  // visits at most hops+1 nodes, so 64-bit totals are ample.
  std::vector<std::uint64_t> count(n, 0), countsq(n, 0);
  std::vector<std::uint32_t> per_trial(n, 0);
  std::vector<NodeId> touched;

  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    RngStream rng = derive_stream(rng_seed, trial, 0x9ca7ULL);
    double u = rng.uniform();
    NodeId at = static_cast<NodeId>(
        std::lower_bound(seed_cdf.begin(), seed_cdf.end(), u) - seed_cdf.begin());
    if (at >= n) at = n - 1;

    touched.clear();
    per_trial[at] += 1;
    touched.push_back(at);
    for (std::uint32_t k = 0; k < hops; ++k) {
      if (t.row_sums[at] <= 0.0) break;  // absorbing
      at = step_walk(g, t, at, rng);
      per_trial[at] += 1;
      touched.push_back(at);
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (NodeId v : touched) {
      count[v] += per_trial[v];
      countsq[v] += static_cast<std::uint64_t>(per_trial[v]) * per_trial[v];
      per_trial[v] = 0;
    }
  }

  FapMcResult res;
  res.trials = trials;
  res.mean.resize(n);
  res.std_error.resize(n);
  const double tn = static_cast<double>(trials);
  for (std::uint64_t i = 0; i < n; ++i) {
    double m = static_cast<double>(count[i]) / tn;
    res.mean[i] = m;
    if (trials > 1) {
      double var = (static_cast<double>(countsq[i]) - tn * m * m) / (tn - 1.0);
      res.std_error[i] = std::sqrt(std::max(var, 0.0) / tn);
    }
  }
  return res;
}

}  // namespace qv
