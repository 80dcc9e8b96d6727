#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qv/graph.hpp"
#include "qv/metrics.hpp"
#include "qv/placement.hpp"
#include "qv/scheduler.hpp"
#include "qv/topology.hpp"

namespace qv {

enum class ArrivalProcess : std::uint8_t { deterministic, poisson };
enum class SeedDistKind : std::uint8_t { uniform, out_degree, explicit_weights };

struct WorkloadSpec {
  double rate_per_s = 100.0;
  ArrivalProcess arrival = ArrivalProcess::deterministic;
  SeedDistKind seed_dist = SeedDistKind::uniform;
  std::vector<double> seed_weights;  // explicit_weights only
  std::uint64_t total_requests = 1000;
  std::uint64_t rng_seed = 1;
  double batch_deadline_s = 2e-3;
  std::uint64_t max_batch = 64;

  void validate() const;
};

// One simulated processor. GPU sampling is a pure cost model charged per
// expected instance (the batch psgs sum); CPU sampling runs the reference
// sampler and charges per actually sampled instance.
struct DeviceModel {
  ProcClass kind = ProcClass::cpu;
  std::uint32_t pipelines = 1;
  double sample_setup_s = 5e-6;
  double sample_per_instance_s = 80e-9;
  double infer_fixed_s = 1e-4;
  double infer_per_node_s = 1e-8;
  std::uint32_t server = 0;
  std::uint32_t device_index = 0;  // gpu index within the server
};

enum class Policy : std::uint8_t {
  cpu_only,
  gpu_only,
  psgs_strict,
  psgs_loose,
  fixed_batch,
};

Policy policy_from_name(const std::string& name);
const char* policy_name(Policy p);

struct PolicySpec {
  Policy kind = Policy::cpu_only;
  double threshold = 0.0;             // psgs threshold, resolved upstream
  std::uint64_t count_threshold = 0;  // fixed_batch: batch sizes >= this go to GPU
};

struct SimInputs {
  const Graph* graph = nullptr;
  const TransitionView* transition = nullptr;
  const PsgsTable* psgs = nullptr;
  const SamplingConfig* sampling = nullptr;
  const PlacementPlan* plan = nullptr;
  const ClusterTopology* topo = nullptr;
  std::uint64_t feature_bytes = 1024;
  std::uint64_t page_size = 8;
};

struct DeviceUtil {
  double compute_busy_fraction = 0.0;
  double comm_busy_fraction = 0.0;
};

struct QueueSample {
  double t = 0.0;
  std::uint64_t cpu_len = 0;
  std::uint64_t gpu_len = 0;
};

struct SimReport {
  std::uint64_t generated = 0;
  std::uint64_t completed = 0;
  std::vector<double> latencies_s;  // indexed by request id (arrival order)
  double p50_s = 0.0, p95_s = 0.0, p99_s = 0.0;
  std::vector<double> cdf_s;  // latency at 1000 evenly spaced quantiles
  double offered_rate_nominal = 0.0;
  double offered_rate_empirical = 0.0;  // generated / last arrival time
  double achieved_throughput = 0.0;     // completed / last completion time
  double horizon_s = 0.0;
  std::vector<DeviceUtil> device_util;
  std::vector<QueueSample> queue_series;
  std::uint64_t cpu_batches = 0;
  std::uint64_t gpu_batches = 0;
  // Largest |latency - (batching + queueing + stage sum)| observed.
  double max_decomposition_error_s = 0.0;
};

// Discrete-event simulation of the serving pipeline: arrivals are batched
// until the deadline or max size, the router picks a processor class, the
// batch waits in that class's shared queue until any pipeline on any
// processor of the class is free, then runs sample -> fetch -> infer.
// Compute stages (sample, infer) serialize on the processor's compute
// resource, fetch on its communication resource, so pipelines overlap the
// stages of different batches. Runs until every request completes.
SimReport run_sim(const SimInputs& inputs, const WorkloadSpec& workload,
                  std::span<const DeviceModel> devices, const PolicySpec& policy);

struct SweepCell {
  PolicySpec policy;
  double rate_per_s = 0.0;
  SimReport report;
};

// Cartesian product of policies and offered rates with identical workload
// seeds per cell. `parallel` runs cells concurrently without changing any
// cell's output.
std::vector<SweepCell> sweep(const SimInputs& inputs, const WorkloadSpec& base,
                             std::span<const DeviceModel> devices,
                             std::span<const PolicySpec> policies,
                             std::span<const double> rates, bool parallel = false);

// Report exports: JSON summary, per-request latency CSV, CDF CSV,
// queue-length time series CSV.
std::string report_to_json_text(const SimReport& report);
void save_latencies_csv(const SimReport& report, const std::string& path);
void save_cdf_csv(const SimReport& report, const std::string& path);
void save_queue_csv(const SimReport& report, const std::string& path);

}  // namespace qv
