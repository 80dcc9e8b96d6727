#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qv/graph.hpp"
#include "qv/metrics.hpp"

namespace qv {

struct FittedLine {
  double slope = 0.0;
  double intercept = 0.0;
  double at(double x) const { return slope * x + intercept; }
};

// One calibration bucket. The average sample pairs the mean per-batch
// subgraph-size estimate with the mean latency; the max sample keeps the
// psgs of the repetition where the maximum occurred, so a noiseless linear
// executor reproduces its own line through either set of points.
struct CalibrationBucket {
  double psgs = 0.0;
  double mean_latency_s = 0.0;
  double max_psgs = 0.0;
  double max_latency_s = 0.0;
};

struct ExecutorCurve {
  FittedLine average;  // least squares through bucket means
  FittedLine maximal;  // least squares through bucket maxima, lifted so it
                       // never dips below the average line at a sampled psgs
  std::vector<CalibrationBucket> buckets;
};

struct CalibrationCurve {
  ExecutorCurve cpu;
  ExecutorCurve gpu;
};

// The four routing thresholds. Intersections that are parallel or land at
// negative psgs are absent; route thresholds then fall back to dominance.
struct CrossPoints {
  std::optional<double> cpu_preferred;         // cpu maximal x gpu average
  std::optional<double> gpu_preferred;         // cpu average x gpu maximal
  std::optional<double> latency_preferred;     // maximal x maximal
  std::optional<double> throughput_preferred;  // average x average
};

CrossPoints cross_points(const CalibrationCurve& curve);

// Resolves a named threshold to a routing value. Absent points degrade to
// 0 (route everything to GPU) or +inf (everything to CPU) depending on
// which executor's line dominates.
double resolve_threshold(const CalibrationCurve& curve, const CrossPoints& cp,
                         const std::string& name);

// A measurable executor: model latency of sampling one batch.
struct BatchProbe {
  std::span<const NodeId> seeds;
  double psgs_sum = 0.0;
  std::uint64_t rng_seed = 0;
};
using Executor = std::function<double(const BatchProbe&)>;

// Pure linear cost in the batch psgs sum; the noiseless emulator.
Executor linear_model_executor(double setup_s, double per_instance_s);

// Runs the reference sampler and charges per sampled instance, so repeated
// batches with equal psgs spread around the analytic expectation.
Executor sampler_cost_executor(const TransitionView& t, const SamplingConfig& cfg,
                               double setup_s, double per_instance_s);

// Batch generator handle for calibration: bucket b, repetition r ->
// seeds drawn from the configured distribution with a (b, r)-derived
// stream; bucket batch sizes set the psgs spread.
struct CalibrationWorkload {
  const PsgsTable* psgs = nullptr;
  std::uint64_t node_count = 0;
  std::vector<double> seed_weights;  // empty = uniform
  std::vector<std::uint64_t> bucket_batch_sizes = {1, 2, 4, 8, 16, 32};
  std::uint64_t rng_seed = 1;
};

// Measures both executors over every (bucket, repetition) batch and fits
// the average and maximal lines per executor. Requires >= 5 buckets with
// >= 20 repetitions and at least two distinct psgs abscissae.
CalibrationCurve calibrate(const CalibrationWorkload& workload,
                           const Executor& cpu, const Executor& gpu,
                           std::uint32_t repetitions);

enum class ProcClass : std::uint8_t { cpu = 0, gpu = 1 };

// Accumulated psgs below the threshold goes to CPU; the boundary is
// inclusive to GPU.
ProcClass route_batch(std::span<const NodeId> seeds, const PsgsTable& psgs,
                      double threshold);

// Completion-time model parameters for one processor:
//   T_task = base * A - async_time^(-eff) + sum_q remote_q * A_q
// The remote term is shared: every processor pays the same congestion
// charge for the whole assignment. async_time <= 0 means no overlap credit.
struct ProcessorParams {
  double base = 1.0;
  double remote = 0.0;
  double async_time = 0.0;
  double eff = 1.0;
};

struct MicroBatchAssignment {
  std::vector<std::uint64_t> sizes;      // sums to batch size
  std::vector<double> predicted_time_s;  // T_task per processor
  double makespan_s = 0.0;
};

// Integer split of one batch across heterogeneous processors minimizing the
// predicted makespan: projected gradient descent on the simplex with early
// stopping, sum-preserving rounding, then single-unit moves until stable.
MicroBatchAssignment optimize_microbatch(std::uint64_t batch_size,
                                         std::span<const ProcessorParams> procs);

// JSON exports.
std::string calibration_to_json_text(const CalibrationCurve& curve,
                                     const CrossPoints& cp);
struct LoadedCalibration {
  CalibrationCurve curve;
  CrossPoints cross;
};
LoadedCalibration calibration_from_json_text(const std::string& text,
                                             const std::string& origin = "<inline>");

}  // namespace qv
