// Times the OpenMP table kernels against their serial twins on a synthetic
// power-law-ish graph and checks the outputs agree bit-for-bit.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "qv/graph.hpp"
#include "qv/metrics.hpp"
#include "qv/rng.hpp"
#include "qv/sampler.hpp"

using namespace qv;

namespace {

Graph synthetic_graph(std::uint64_t nodes, std::uint64_t edges, std::uint64_t seed) {
  RngStream rng = derive_stream(seed, 0xBE9C4ULL);
  std::vector<Edge> es;
  es.reserve(edges);
  for (std::uint64_t e = 0; e < edges; ++e) {
    // Square the uniform to skew sources toward low ids (hubs).
    double u = rng.uniform();
    auto src = static_cast<NodeId>(u * u * static_cast<double>(nodes));
    auto dst = rng.below(nodes);
    es.push_back({std::min<NodeId>(src, nodes - 1), dst, 1.0 + rng.uniform()});
  }
  return Graph::from_edges(nodes, es);
}

template <typename F>
double time_s(F&& f, int reps) {
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

bool same(const std::vector<double>& a, const std::vector<double>& b) {
  return a == b;
}

}  // namespace

int main(int argc, char** argv) {
  std::uint64_t nodes = argc > 1 ? std::stoull(argv[1]) : 200000;
  std::uint64_t edges = argc > 2 ? std::stoull(argv[2]) : 2000000;
  int reps = argc > 3 ? std::stoi(argv[3]) : 3;

#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: not enabled\n");
#endif
  std::printf("graph: %llu nodes, %llu edges\n",
              static_cast<unsigned long long>(nodes),
              static_cast<unsigned long long>(edges));

  Graph g = synthetic_graph(nodes, edges, 7);
  TransitionView t = transition_view(g);
  SamplingConfig cfg{{15, 10}};

  PsgsTable ps, pp;
  double s_psgs = time_s([&] { ps = serial::compute_psgs(t, cfg); }, reps);
  double p_psgs = time_s([&] { pp = compute_psgs(t, cfg); }, reps);
  std::printf("psgs     serial %8.3f ms | omp %8.3f ms | x%.2f | match=%s\n",
              s_psgs * 1e3, p_psgs * 1e3, s_psgs / p_psgs,
              same(ps.values, pp.values) ? "yes" : "NO");

  FapTable fs, fp;
  double s_fap = time_s([&] { fs = serial::compute_fap(t, 2); }, reps);
  double p_fap = time_s([&] { fp = compute_fap(t, 2); }, reps);
  std::printf("fap      serial %8.3f ms | omp %8.3f ms | x%.2f | match=%s\n",
              s_fap * 1e3, p_fap * 1e3, s_fap / p_fap,
              same(fs.values, fp.values) ? "yes" : "NO");

  AccessProbTable as, ap;
  double s_ie = time_s([&] { as = serial::compute_access_prob_ie(g, t, 3); }, reps);
  double p_ie = time_s([&] { ap = compute_access_prob_ie(g, t, 3); }, reps);
  std::printf("accessie serial %8.3f ms | omp %8.3f ms | x%.2f | match=%s\n",
              s_ie * 1e3, p_ie * 1e3, s_ie / p_ie,
              same(as.values, ap.values) ? "yes" : "NO");

  std::vector<NodeId> seeds(4096);
  RngStream sr = derive_stream(11, 0x5EEDULL);
  for (auto& s : seeds) s = sr.below(nodes);
  double p_batch = time_s([&] { batch_sample(t, seeds, cfg, 3); }, reps);
  std::printf("batch_sample (%zu seeds) omp %8.3f ms\n", seeds.size(),
              p_batch * 1e3);
  return 0;
}
