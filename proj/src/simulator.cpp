#include "qv/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <queue>

#include <json.hpp>

#include "qv/error.hpp"
#include "qv/rng.hpp"
#include "qv/sampler.hpp"

namespace qv {

using ordered_json = nlohmann::ordered_json;

void WorkloadSpec::validate() const {
  if (!(rate_per_s > 0.0)) throw ValidationError("workload rate must be > 0");
  if (!(batch_deadline_s > 0.0)) {
    throw ValidationError("batching deadline must be > 0");
  }
  if (max_batch < 1) throw ValidationError("max batch size must be >= 1");
  if (seed_dist == SeedDistKind::explicit_weights && seed_weights.empty()) {
    throw ValidationError("explicit seed distribution needs weights");
  }
}

Policy policy_from_name(const std::string& name) {
  if (name == "cpu-only") return Policy::cpu_only;
  if (name == "gpu-only") return Policy::gpu_only;
  if (name == "psgs-strict") return Policy::psgs_strict;
  if (name == "psgs-loose") return Policy::psgs_loose;
  if (name == "fixed-batch") return Policy::fixed_batch;
  throw ConfigError("unknown policy: " + name);
}

const char* policy_name(Policy p) {
  switch (p) {
    case Policy::cpu_only: return "cpu-only";
    case Policy::gpu_only: return "gpu-only";
    case Policy::psgs_strict: return "psgs-strict";
    case Policy::psgs_loose: return "psgs-loose";
    case Policy::fixed_batch: return "fixed-batch";
  }
  return "?";
}

namespace {

enum class Stage : std::uint8_t { sample = 0, fetch = 1, infer = 2 };

struct Batch {
  std::uint64_t id = 0;
  std::vector<std::uint64_t> request_ids;
  std::vector<NodeId> seeds;
  double close_t = 0.0;
  double dispatch_t = 0.0;
  ProcClass cls = ProcClass::cpu;
  std::size_t device = 0;
  double dur[3] = {0, 0, 0};
  double stage_start[3] = {0, 0, 0};
  double stage_end[3] = {0, 0, 0};
  double psgs_sum = 0.0;
  std::uint64_t total_instances = 0;
  std::vector<NodeId> unique_nodes;
};

struct Resource {
  bool busy = false;
  double busy_total = 0.0;
  std::deque<std::pair<std::uint64_t, Stage>> waiting;  // (batch id, stage)
};

struct Device {
  DeviceModel model;
  Resource compute;
  Resource comm;
  std::uint32_t active = 0;
};

struct Ev {
  double t = 0.0;
  std::uint64_t seq = 0;
  enum Kind : std::uint8_t { arrival, deadline, stage_done } kind = arrival;
  std::uint64_t a = 0;  // request id | batch generation | batch id
  std::uint8_t b = 0;   // stage index for stage_done
};

struct EvOrder {
  bool operator()(const Ev& x, const Ev& y) const {
    if (x.t != y.t) return x.t > y.t;
    return x.seq > y.seq;
  }
};

std::vector<double> build_seed_cdf(const SimInputs& in, const WorkloadSpec& w) {
  const std::uint64_t n = in.graph->node_count;
  std::vector<double> cdf(n);
  double acc = 0.0;
  switch (w.seed_dist) {
    case SeedDistKind::uniform:
      for (std::uint64_t i = 0; i < n; ++i) cdf[i] = static_cast<double>(i + 1);
      acc = static_cast<double>(n);
      break;
    case SeedDistKind::out_degree:
      for (std::uint64_t i = 0; i < n; ++i) {
        acc += static_cast<double>(in.graph->out_degree(i));
        cdf[i] = acc;
      }
      if (acc <= 0.0) throw ValidationError("graph has no edges to weight seeds by");
      break;
    case SeedDistKind::explicit_weights:
      if (w.seed_weights.size() != n) {
        throw ValidationError("seed weight vector size does not match node count");
      }
      for (std::uint64_t i = 0; i < n; ++i) {
        if (w.seed_weights[i] < 0.0) {
          throw ValidationError("negative seed weight");
        }
        acc += w.seed_weights[i];
        cdf[i] = acc;
      }
      if (acc <= 0.0) throw ValidationError("seed weights sum to zero");
      break;
  }
  for (double& v : cdf) v /= acc;
  cdf[n - 1] = 1.0;
  return cdf;
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  double rank = std::ceil(q * static_cast<double>(sorted.size()));
  auto idx = static_cast<std::size_t>(std::max(rank, 1.0)) - 1;
  return sorted[std::min(idx, sorted.size() - 1)];
}

}  // namespace

SimReport run_sim(const SimInputs& inputs, const WorkloadSpec& workload,
                  std::span<const DeviceModel> devices, const PolicySpec& policy) {
  workload.validate();
  if (inputs.graph == nullptr || inputs.transition == nullptr ||
      inputs.psgs == nullptr || inputs.sampling == nullptr ||
      inputs.plan == nullptr || inputs.topo == nullptr) {
    throw ConfigError("simulation inputs incomplete");
  }
  const std::uint64_t n = inputs.graph->node_count;
  if (inputs.psgs->values.size() != n || inputs.plan->feature_count != n) {
    throw ConfigError("simulation inputs disagree on node count");
  }
  if (devices.empty()) throw ConfigError("simulation needs at least one device");
  bool has_cpu = false, has_gpu = false;
  for (const DeviceModel& d : devices) {
    (d.kind == ProcClass::cpu ? has_cpu : has_gpu) = true;
    if (d.pipelines < 1) throw ConfigError("device pipelines must be >= 1");
    if (d.server >= inputs.topo->servers) throw ConfigError("device server out of range");
  }
  switch (policy.kind) {
    case Policy::cpu_only:
      if (!has_cpu) throw ConfigError("cpu-only policy without a cpu device");
      break;
    case Policy::gpu_only:
      if (!has_gpu) throw ConfigError("gpu-only policy without a gpu device");
      break;
    default:
      if (!has_cpu || !has_gpu) {
        throw ConfigError("hybrid policies need both device classes");
      }
  }

  SimReport report;
  report.offered_rate_nominal = workload.rate_per_s;
  report.generated = workload.total_requests;
  report.latencies_s.assign(workload.total_requests, 0.0);
  report.device_util.resize(devices.size());
  if (workload.total_requests == 0) return report;

  // Per-server lookup tables, one per server actually hosting a device.
  std::map<std::uint32_t, FeatureLookupTable> lookups;
  for (const DeviceModel& d : devices) {
    if (!lookups.count(d.server)) {
      lookups.emplace(d.server,
                      build_lookup_table(*inputs.plan, *inputs.topo, d.server));
    }
  }

  std::vector<Device> devs;
  devs.reserve(devices.size());
  for (const DeviceModel& d : devices) devs.push_back({d, {}, {}, 0});

  // Request generation (arrival time, seed node), fixed up front.
  std::vector<double> arrivals(workload.total_requests);
  std::vector<NodeId> req_seed(workload.total_requests);
  {
    std::vector<double> cdf = build_seed_cdf(inputs, workload);
    RngStream arr_rng = derive_stream(workload.rng_seed, 0xA221ULL);
    RngStream seed_rng = derive_stream(workload.rng_seed, 0x5EEDULL);
    double t = 0.0;
    for (std::uint64_t i = 0; i < workload.total_requests; ++i) {
      t += workload.arrival == ArrivalProcess::deterministic
               ? 1.0 / workload.rate_per_s
               : arr_rng.exponential() / workload.rate_per_s;
      arrivals[i] = t;
      double u = seed_rng.uniform();
      auto node = static_cast<NodeId>(
          std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      req_seed[i] = std::min<NodeId>(node, n - 1);
    }
    report.offered_rate_empirical =
        static_cast<double>(workload.total_requests) / arrivals.back();
  }

  std::priority_queue<Ev, std::vector<Ev>, EvOrder> events;
  std::uint64_t seq = 0;
  auto push_event = [&](double t, Ev::Kind k, std::uint64_t a, std::uint8_t b = 0) {
    events.push(Ev{t, seq++, k, a, b});
  };
  for (std::uint64_t i = 0; i < workload.total_requests; ++i) {
    push_event(arrivals[i], Ev::arrival, i);
  }

  std::vector<Batch> batches;
  std::deque<std::uint64_t> class_queue[2];
  auto record_queue = [&](double t) {
    report.queue_series.push_back(
        {t, class_queue[0].size(), class_queue[1].size()});
  };

  // Forming batch state.
  std::vector<std::uint64_t> forming;
  std::uint64_t forming_gen = 0;

  auto close_batch = [&](double t) {
    Batch b;
    b.id = batches.size();
    b.request_ids = forming;
    forming.clear();
    ++forming_gen;
    b.close_t = t;
    b.seeds.reserve(b.request_ids.size());
    for (std::uint64_t r : b.request_ids) b.seeds.push_back(req_seed[r]);
    for (NodeId s : b.seeds) b.psgs_sum += inputs.psgs->values[s];

    // One reference sampling pass per batch feeds the CPU cost model and
    // the feature set for both classes.
    BatchSampleResult sampled =
        batch_sample(*inputs.transition, b.seeds, *inputs.sampling,
                     derive_stream(workload.rng_seed, 0xBA7C4ULL, b.id).state);
    b.total_instances = sampled.stats.total_instances;
    b.unique_nodes = std::move(sampled.stats.unique_nodes);

    switch (policy.kind) {
      case Policy::cpu_only: b.cls = ProcClass::cpu; break;
      case Policy::gpu_only: b.cls = ProcClass::gpu; break;
      case Policy::psgs_strict:
      case Policy::psgs_loose:
        b.cls = std::isinf(policy.threshold)
                    ? ProcClass::cpu
                    : (policy.threshold <= 0.0
                           ? ProcClass::gpu
                           : route_batch(b.seeds, *inputs.psgs, policy.threshold));
        break;
      case Policy::fixed_batch:
        b.cls = b.seeds.size() >= policy.count_threshold ? ProcClass::gpu
                                                         : ProcClass::cpu;
        break;
    }
    class_queue[static_cast<int>(b.cls)].push_back(b.id);
    batches.push_back(std::move(b));
    record_queue(t);
  };

  auto resource_of = [&](Device& d, Stage s) -> Resource& {
    return s == Stage::fetch ? d.comm : d.compute;
  };

  auto pump = [&](Resource& res, double t) {
    if (res.busy || res.waiting.empty()) return;
    auto [bid, stage] = res.waiting.front();
    res.waiting.pop_front();
    Batch& b = batches[bid];
    int si = static_cast<int>(stage);
    b.stage_start[si] = t;
    b.stage_end[si] = t + b.dur[si];
    res.busy = true;
    res.busy_total += b.dur[si];
    push_event(b.stage_end[si], Ev::stage_done, bid, static_cast<std::uint8_t>(si));
  };

  auto try_dispatch = [&](ProcClass cls, double t) {
    auto& q = class_queue[static_cast<int>(cls)];
    while (!q.empty()) {
      // First idle pipeline on any processor of the class; prefer the least
      // loaded processor, index breaks ties.
      std::size_t pick = devs.size();
      for (std::size_t i = 0; i < devs.size(); ++i) {
        if (devs[i].model.kind != cls) continue;
        if (devs[i].active >= devs[i].model.pipelines) continue;
        if (pick == devs.size() || devs[i].active < devs[pick].active) pick = i;
      }
      if (pick == devs.size()) return;
      std::uint64_t bid = q.front();
      q.pop_front();
      record_queue(t);
      Batch& b = batches[bid];
      Device& d = devs[pick];
      ++d.active;
      b.device = pick;
      b.dispatch_t = t;

      const DeviceModel& m = d.model;
      double work = m.kind == ProcClass::cpu
                        ? static_cast<double>(b.total_instances)
                        : b.psgs_sum;
      b.dur[0] = m.sample_setup_s + m.sample_per_instance_s * work;
      ReadPlan reads = plan_reads(lookups.at(m.server), b.unique_nodes,
                                  inputs.page_size);
      DeviceRef reader{m.server,
                       m.kind == ProcClass::gpu ? Tier::gpu : Tier::host,
                       m.device_index};
      b.dur[1] =
          fetch_cost(reads, *inputs.topo, inputs.feature_bytes, reader).total_s;
      b.dur[2] = m.infer_fixed_s +
                 m.infer_per_node_s * static_cast<double>(b.unique_nodes.size());

      Resource& res = resource_of(d, Stage::sample);
      res.waiting.emplace_back(bid, Stage::sample);
      pump(res, t);
    }
  };

  double last_completion = 0.0;

  while (!events.empty()) {
    Ev ev = events.top();
    events.pop();
    switch (ev.kind) {
      case Ev::arrival: {
        if (forming.empty()) {
          push_event(ev.t + workload.batch_deadline_s, Ev::deadline, forming_gen);
        }
        forming.push_back(ev.a);
        if (forming.size() >= workload.max_batch) {
          close_batch(ev.t);
          try_dispatch(batches.back().cls, ev.t);
        }
        break;
      }
      case Ev::deadline: {
        if (ev.a == forming_gen && !forming.empty()) {
          close_batch(ev.t);
          try_dispatch(batches.back().cls, ev.t);
        }
        break;
      }
      case Ev::stage_done: {
        Batch& b = batches[ev.a];
        Device& d = devs[b.device];
        auto stage = static_cast<Stage>(ev.b);
        Resource& res = resource_of(d, stage);
        res.busy = false;
        if (stage == Stage::sample) {
          d.comm.waiting.emplace_back(b.id, Stage::fetch);
          pump(d.comm, ev.t);
        } else if (stage == Stage::fetch) {
          d.compute.waiting.emplace_back(b.id, Stage::infer);
          pump(d.compute, ev.t);
        } else {
          // Batch complete.
          last_completion = std::max(last_completion, ev.t);
          for (std::uint64_t r : b.request_ids) {
            report.latencies_s[r] = ev.t - arrivals[r];
            ++report.completed;
            // latency = batching wait + queue wait + stage span; the stage
            // span telescopes over waits and durations inside the device.
            double decomposed = (b.close_t - arrivals[r]) +
                                (b.dispatch_t - b.close_t) + (ev.t - b.dispatch_t);
            report.max_decomposition_error_s =
                std::max(report.max_decomposition_error_s,
                         std::abs(decomposed - report.latencies_s[r]));
          }
          (b.cls == ProcClass::cpu ? report.cpu_batches : report.gpu_batches)++;
          --d.active;
        }
        pump(res, ev.t);
        if (stage == Stage::infer) try_dispatch(b.cls, ev.t);
        break;
      }
    }
  }

  if (report.completed != report.generated) {
    throw Error("simulation retired " + std::to_string(report.completed) +
                " of " + std::to_string(report.generated) + " requests");
  }

  report.horizon_s = last_completion;
  report.achieved_throughput =
      last_completion > 0.0
          ? static_cast<double>(report.completed) / last_completion
          : 0.0;
  for (std::size_t i = 0; i < devs.size(); ++i) {
    if (report.horizon_s > 0.0) {
      report.device_util[i].compute_busy_fraction =
          devs[i].compute.busy_total / report.horizon_s;
      report.device_util[i].comm_busy_fraction =
          devs[i].comm.busy_total / report.horizon_s;
    }
  }

  std::vector<double> sorted = report.latencies_s;
  std::sort(sorted.begin(), sorted.end());
  report.p50_s = percentile(sorted, 0.50);
  report.p95_s = percentile(sorted, 0.95);
  report.p99_s = percentile(sorted, 0.99);
  report.cdf_s.resize(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    std::size_t idx = sorted.size() == 1
                          ? 0
                          : (i * (sorted.size() - 1)) / 999;
    report.cdf_s[i] = sorted[idx];
  }
  return report;
}

std::vector<SweepCell> sweep(const SimInputs& inputs, const WorkloadSpec& base,
                             std::span<const DeviceModel> devices,
                             std::span<const PolicySpec> policies,
                             std::span<const double> rates, bool parallel) {
  std::vector<SweepCell> cells;
  for (const PolicySpec& p : policies) {
    for (double r : rates) {
      SweepCell c;
      c.policy = p;
      c.rate_per_s = r;
      cells.push_back(std::move(c));
    }
  }
  const auto total = static_cast<std::int64_t>(cells.size());
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::int64_t i = 0; i < total; ++i) {
    WorkloadSpec w = base;
    w.rate_per_s = cells[i].rate_per_s;
    cells[i].report = run_sim(inputs, w, devices, cells[i].policy);
  }
  return cells;
}

std::string report_to_json_text(const SimReport& r) {
  ordered_json j;
  j["generated"] = r.generated;
  j["completed"] = r.completed;
  j["p50_s"] = r.p50_s;
  j["p95_s"] = r.p95_s;
  j["p99_s"] = r.p99_s;
  j["offered_rate_nominal"] = r.offered_rate_nominal;
  j["offered_rate_empirical"] = r.offered_rate_empirical;
  j["achieved_throughput"] = r.achieved_throughput;
  j["horizon_s"] = r.horizon_s;
  j["cpu_batches"] = r.cpu_batches;
  j["gpu_batches"] = r.gpu_batches;
  j["max_decomposition_error_s"] = r.max_decomposition_error_s;
  ordered_json util = ordered_json::array();
  for (const auto& u : r.device_util) {
    util.push_back({{"compute_busy_fraction", u.compute_busy_fraction},
                    {"comm_busy_fraction", u.comm_busy_fraction}});
  }
  j["device_util"] = util;
  return j.dump(2) + "\n";
}

void save_latencies_csv(const SimReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write csv file: " + path);
  out << "request_id,latency_s\n";
  char buf[64];
  for (std::size_t i = 0; i < r.latencies_s.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, r.latencies_s[i]);
    out << buf;
  }
  if (!out) throw Error("short write to " + path);
}

void save_cdf_csv(const SimReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write csv file: " + path);
  out << "quantile,latency_s\n";
  char buf[64];
  for (std::size_t i = 0; i < r.cdf_s.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.17g\n",
                  static_cast<double>(i) / 999.0, r.cdf_s[i]);
    out << buf;
  }
  if (!out) throw Error("short write to " + path);
}

void save_queue_csv(const SimReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write csv file: " + path);
  out << "time_s,cpu_queue,gpu_queue\n";
  char buf[96];
  for (const QueueSample& s : r.queue_series) {
    std::snprintf(buf, sizeof buf, "%.9f,%llu,%llu\n", s.t,
                  static_cast<unsigned long long>(s.cpu_len),
                  static_cast<unsigned long long>(s.gpu_len));
    out << buf;
  }
  if (!out) throw Error("short write to " + path);
}

}  // namespace qv
