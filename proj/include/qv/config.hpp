#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qv/graph.hpp"
#include "qv/metrics.hpp"
#include "qv/simulator.hpp"
#include "qv/topology.hpp"

namespace qv {

// One JSON document captures a full run; CLI flags override single fields.
// See README for the schema.
struct RunConfig {
  std::string graph_path;
  GraphFormat graph_format = GraphFormat::edge_list_text;
  bool remap_ids = false;

  std::optional<std::string> topology_path;
  std::optional<ClusterTopology> topology_inline;

  SamplingConfig sampling{{2, 2}};
  std::uint32_t fap_hops = 2;
  std::string fap_seed_distribution = "uniform";  // uniform | out-degree
  std::uint32_t access_prob_layers = 2;
  std::size_t summary_top_k = 10;

  std::uint64_t feature_bytes = 1024;
  std::uint64_t page_size = 8;
  std::uint32_t home_server = 0;

  // Calibration: executors are linear models unless cpu_use_sampler, in
  // which case the CPU side runs the reference sampler.
  std::vector<std::uint64_t> calibration_batch_sizes = {1, 2, 4, 8, 16, 32};
  std::uint32_t calibration_repetitions = 30;
  bool cpu_use_sampler = true;
  double cpu_setup_s = 5e-6;
  double cpu_per_instance_s = 80e-9;
  double gpu_setup_s = 300e-6;
  double gpu_per_instance_s = 2e-9;

  std::string policy = "psgs-strict";
  // Explicit numeric threshold wins; otherwise a named cross point, either
  // chosen here or defaulted by the policy (strict -> latency, loose ->
  // throughput).
  std::optional<double> threshold;
  std::optional<std::string> threshold_name;
  std::optional<std::string> calibration_path;  // for simulate
  std::uint64_t fixed_batch_count_threshold = 32;

  WorkloadSpec workload;
  std::vector<DeviceModel> devices;

  std::vector<std::string> sweep_policies;
  std::vector<double> sweep_rates;
  bool sweep_parallel = false;

  std::uint64_t seed = 42;
  std::string out_dir = "out";

  ClusterTopology resolve_topology() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text,
                                    const std::string& origin = "<inline>");

}  // namespace qv
