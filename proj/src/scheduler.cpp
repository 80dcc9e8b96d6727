#include "qv/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "qv/error.hpp"
#include "qv/numeric.hpp"
#include "qv/rng.hpp"
#include "qv/sampler.hpp"

namespace qv {

using ordered_json = nlohmann::ordered_json;

namespace {

FittedLine least_squares(std::span<const double> xs, std::span<const double> ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double denom = n * sxx - sx * sx;
  if (denom == 0.0) {
    throw CalibrationError("degenerate calibration: all psgs values identical");
  }
  FittedLine line;
  line.slope = (n * sxy - sx * sy) / denom;
  line.intercept = (sy - line.slope * sx) / n;
  return line;
}

// Intersection of two lines in the positive-psgs quadrant.
std::optional<double> intersect(const FittedLine& a, const FittedLine& b) {
  double ds = a.slope - b.slope;
  if (ds == 0.0) return std::nullopt;
  double x = (b.intercept - a.intercept) / ds;
  if (!(x >= 0.0) || !std::isfinite(x)) return std::nullopt;
  return x;
}

}  // namespace

CrossPoints cross_points(const CalibrationCurve& curve) {
  CrossPoints cp;
  cp.cpu_preferred = intersect(curve.cpu.maximal, curve.gpu.average);
  cp.gpu_preferred = intersect(curve.cpu.average, curve.gpu.maximal);
  cp.latency_preferred = intersect(curve.cpu.maximal, curve.gpu.maximal);
  cp.throughput_preferred = intersect(curve.cpu.average, curve.gpu.average);
  return cp;
}

double resolve_threshold(const CalibrationCurve& curve, const CrossPoints& cp,
                         const std::string& name) {
  std::optional<double> point;
  const FittedLine* cpu_line = &curve.cpu.average;
  const FittedLine* gpu_line = &curve.gpu.average;
  if (name == "cpu-preferred") {
    point = cp.cpu_preferred;
    cpu_line = &curve.cpu.maximal;
  } else if (name == "gpu-preferred") {
    point = cp.gpu_preferred;
    gpu_line = &curve.gpu.maximal;
  } else if (name == "latency" || name == "latency-preferred") {
    point = cp.latency_preferred;
    cpu_line = &curve.cpu.maximal;
    gpu_line = &curve.gpu.maximal;
  } else if (name == "throughput" || name == "throughput-preferred") {
    point = cp.throughput_preferred;
  } else {
    throw ConfigError("unknown threshold name: " + name);
  }
  if (point) return *point;
  // No crossing: one executor dominates everywhere. Compare at a probe
  // point; GPU dominance routes everything to GPU (threshold 0), CPU
  // dominance routes everything to CPU (threshold +inf).
  double probe = 1.0;
  for (const auto& b : curve.cpu.buckets) probe = std::max(probe, b.psgs);
  for (const auto& b : curve.gpu.buckets) probe = std::max(probe, b.psgs);
  return gpu_line->at(probe) <= cpu_line->at(probe)
             ? 0.0
             : std::numeric_limits<double>::infinity();
}

Executor linear_model_executor(double setup_s, double per_instance_s) {
  return [setup_s, per_instance_s](const BatchProbe& p) {
    return setup_s + per_instance_s * p.psgs_sum;
  };
}

Executor sampler_cost_executor(const TransitionView& t, const SamplingConfig& cfg,
                               double setup_s, double per_instance_s) {
  const TransitionView* view = &t;
  SamplingConfig config = cfg;
  return [view, config, setup_s, per_instance_s](const BatchProbe& p) {
    BatchSampleResult r = batch_sample(*view, p.seeds, config, p.rng_seed);
    return setup_s +
           per_instance_s * static_cast<double>(r.stats.total_instances);
  };
}

namespace {

std::vector<NodeId> draw_seeds(const CalibrationWorkload& w, std::uint64_t count,
                               RngStream& rng) {
  std::vector<NodeId> seeds(count);
  if (w.seed_weights.empty()) {
    for (auto& s : seeds) s = rng.below(w.node_count);
    return seeds;
  }
  std::vector<double> cdf(w.seed_weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.seed_weights.size(); ++i) {
    acc += w.seed_weights[i];
    cdf[i] = acc;
  }
  for (auto& s : seeds) {
    double u = rng.uniform() * acc;
    s = static_cast<NodeId>(
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (s >= w.node_count) s = w.node_count - 1;
  }
  return seeds;
}

ExecutorCurve fit_curve(const std::vector<CalibrationBucket>& buckets) {
  std::vector<double> xs, means, mxs, maxes;
  for (const auto& b : buckets) {
    xs.push_back(b.psgs);
    means.push_back(b.mean_latency_s);
    mxs.push_back(b.max_psgs);
    maxes.push_back(b.max_latency_s);
  }
  ExecutorCurve curve;
  curve.buckets = buckets;
  curve.average = least_squares(xs, means);
  curve.maximal = least_squares(mxs, maxes);
  // A least-squares fit through maxima can still dip below the average line
  // at some sampled psgs; the minimal intercept lift restores the upper
  // envelope without touching the noiseless case.
  double lift = 0.0;
  for (const auto& b : buckets) {
    lift = std::max(lift, curve.average.at(b.psgs) - curve.maximal.at(b.psgs));
    lift = std::max(lift,
                    curve.average.at(b.max_psgs) - curve.maximal.at(b.max_psgs));
  }
  curve.maximal.intercept += lift;
  return curve;
}

}  // namespace

CalibrationCurve calibrate(const CalibrationWorkload& workload,
                           const Executor& cpu, const Executor& gpu,
                           std::uint32_t repetitions) {
  if (workload.psgs == nullptr || workload.node_count == 0) {
    throw CalibrationError("calibration workload missing psgs table");
  }
  if (workload.bucket_batch_sizes.size() < 5) {
    throw CalibrationError("calibration needs >= 5 psgs buckets, got " +
                           std::to_string(workload.bucket_batch_sizes.size()));
  }
  if (repetitions < 20) {
    throw CalibrationError("calibration needs >= 20 repetitions per bucket");
  }

  std::vector<CalibrationBucket> cpu_buckets, gpu_buckets;
  for (std::size_t b = 0; b < workload.bucket_batch_sizes.size(); ++b) {
    NeumaierSum psgs_acc, cpu_acc, gpu_acc;
    double cpu_max = -1.0, gpu_max = -1.0;
    double cpu_max_x = 0.0, gpu_max_x = 0.0;
    for (std::uint32_t r = 0; r < repetitions; ++r) {
      RngStream rng = derive_stream(workload.rng_seed, b, r);
      std::vector<NodeId> seeds =
          draw_seeds(workload, workload.bucket_batch_sizes[b], rng);
      double psgs_sum = 0.0;
      for (NodeId s : seeds) psgs_sum += workload.psgs->values[s];
      BatchProbe probe{seeds, psgs_sum, derive_stream(workload.rng_seed, b, r, 7).state};
      // Executors run sequentially so measurements stay isolated.
      double c = cpu(probe);
      double g = gpu(probe);
      psgs_acc.add(psgs_sum);
      cpu_acc.add(c);
      gpu_acc.add(g);
      if (c > cpu_max) {
        cpu_max = c;
        cpu_max_x = psgs_sum;
      }
      if (g > gpu_max) {
        gpu_max = g;
        gpu_max_x = psgs_sum;
      }
    }
    double reps = static_cast<double>(repetitions);
    double x = psgs_acc.value() / reps;
    cpu_buckets.push_back({x, cpu_acc.value() / reps, cpu_max_x, cpu_max});
    gpu_buckets.push_back({x, gpu_acc.value() / reps, gpu_max_x, gpu_max});
  }

  CalibrationCurve curve;
  curve.cpu = fit_curve(cpu_buckets);
  curve.gpu = fit_curve(gpu_buckets);
  return curve;
}

ProcClass route_batch(std::span<const NodeId> seeds, const PsgsTable& psgs,
                      double threshold) {
  if (!(threshold > 0.0)) throw ValidationError("routing threshold must be > 0");
  NeumaierSum acc;
  for (NodeId s : seeds) {
    if (s >= psgs.values.size()) {
      throw ValidationError("seed " + std::to_string(s) + " outside psgs table");
    }
    acc.add(psgs.values[s]);
  }
  return acc.value() < threshold ? ProcClass::cpu : ProcClass::gpu;
}

namespace {

double async_credit(const ProcessorParams& p) {
  if (p.async_time <= 0.0) return 0.0;
  return std::pow(p.async_time, -p.eff);
}

std::vector<double> task_times(std::span<const ProcessorParams> procs,
                               std::span<const double> assign) {
  double remote = 0.0;
  for (std::size_t q = 0; q < procs.size(); ++q) {
    remote += procs[q].remote * assign[q];
  }
  std::vector<double> t(procs.size());
  for (std::size_t p = 0; p < procs.size(); ++p) {
    t[p] = procs[p].base * assign[p] - async_credit(procs[p]) + remote;
  }
  return t;
}

double makespan_of(std::span<const ProcessorParams> procs,
                   std::span<const double> assign) {
  auto t = task_times(procs, assign);
  return *std::max_element(t.begin(), t.end());
}

// Euclidean projection onto { a >= 0, sum a = total }.
void project_simplex(std::vector<double>& a, double total) {
  std::vector<double> u = a;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  std::size_t rho = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    double t = (cum - total) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      theta = t;
    }
  }
  if (rho == 0) {
    std::fill(a.begin(), a.end(), total / static_cast<double>(a.size()));
    return;
  }
  for (double& v : a) v = std::max(0.0, v - theta);
}

std::vector<std::uint64_t> round_preserving_sum(std::span<const double> a,
                                                std::uint64_t total) {
  std::vector<std::uint64_t> r(a.size());
  std::vector<std::pair<double, std::size_t>> frac(a.size());
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double f = std::floor(a[i]);
    r[i] = static_cast<std::uint64_t>(std::max(0.0, f));
    assigned += r[i];
    frac[i] = {a[i] - f, i};
  }
  // Largest remainders take the leftover units; index breaks ties.
  std::sort(frac.begin(), frac.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  std::uint64_t leftover = total > assigned ? total - assigned : 0;
  for (std::size_t i = 0; i < frac.size() && leftover > 0; ++i, --leftover) {
    ++r[frac[i].second];
  }
  // Rounding up floors can only undershoot, but guard the total anyway.
  std::uint64_t sum = 0;
  for (auto v : r) sum += v;
  while (sum > total) {
    auto it = std::max_element(r.begin(), r.end());
    --*it;
    --sum;
  }
  while (sum < total) {
    ++r[0];
    ++sum;
  }
  return r;
}

double integer_makespan(std::span<const ProcessorParams> procs,
                        std::span<const std::uint64_t> sizes) {
  std::vector<double> a(sizes.begin(), sizes.end());
  return makespan_of(procs, a);
}

}  // namespace

MicroBatchAssignment optimize_microbatch(std::uint64_t batch_size,
                                         std::span<const ProcessorParams> procs) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (procs.empty()) throw ValidationError("need at least one processor");
  for (const auto& p : procs) {
    if (!(p.base > 0.0)) throw ValidationError("processor base cost must be > 0");
  }
  const std::size_t n = procs.size();
  const double total = static_cast<double>(batch_size);

  // Projected subgradient descent on the continuous relaxation.
  std::vector<double> a(n, total / static_cast<double>(n));
  double best_val = makespan_of(procs, a);
  std::vector<double> best = a;
  double base_scale = 0.0;
  for (const auto& p : procs) base_scale = std::max(base_scale, p.base + p.remote);
  double step = total / 2.0;
  std::uint32_t stable = 0;
  for (std::uint32_t iter = 0; iter < 400 && stable < 25; ++iter) {
    auto t = task_times(procs, a);
    std::size_t arg =
        std::max_element(t.begin(), t.end()) - t.begin();
    // Subgradient of max_p T_p: base on the argmax slot plus the shared
    // remote coefficients everywhere.
    std::vector<double> prev = a;
    for (std::size_t q = 0; q < n; ++q) {
      double gsub = procs[q].remote + (q == arg ? procs[arg].base : 0.0);
      a[q] -= step * gsub / base_scale;
    }
    project_simplex(a, total);
    double val = makespan_of(procs, a);
    if (val < best_val - 1e-12 * std::max(1.0, std::abs(best_val))) {
      best_val = val;
      best = a;
      stable = 0;
    } else {
      ++stable;  // early stop once the assignment settles
    }
    step *= 0.97;
  }

  // Integer candidates: rounded descent result, equal split, all on the
  // processor with the smallest base.
  std::vector<std::vector<std::uint64_t>> candidates;
  candidates.push_back(round_preserving_sum(best, batch_size));
  {
    std::vector<double> eq(n, total / static_cast<double>(n));
    candidates.push_back(round_preserving_sum(eq, batch_size));
    std::size_t fastest =
        std::min_element(procs.begin(), procs.end(),
                         [](const ProcessorParams& x, const ProcessorParams& y) {
                           return x.base < y.base;
                         }) -
        procs.begin();
    std::vector<std::uint64_t> all(n, 0);
    all[fastest] = batch_size;
    candidates.push_back(std::move(all));
  }

  std::vector<std::uint64_t> sizes = candidates[0];
  double val = integer_makespan(procs, sizes);
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    double v = integer_makespan(procs, candidates[c]);
    if (v < val) {
      val = v;
      sizes = candidates[c];
    }
  }

  // Single-unit moves off the critical processor until no move helps.
  bool improved = true;
  while (improved) {
    improved = false;
    auto t = task_times(procs, std::vector<double>(sizes.begin(), sizes.end()));
    std::size_t arg = std::max_element(t.begin(), t.end()) - t.begin();
    if (sizes[arg] == 0) break;
    for (std::size_t q = 0; q < n; ++q) {
      if (q == arg) continue;
      std::vector<std::uint64_t> trial = sizes;
      --trial[arg];
      ++trial[q];
      double v = integer_makespan(procs, trial);
      if (v < val - 1e-15) {
        val = v;
        sizes = std::move(trial);
        improved = true;
        break;
      }
    }
  }

  MicroBatchAssignment out;
  out.sizes = sizes;
  std::vector<double> af(sizes.begin(), sizes.end());
  out.predicted_time_s = task_times(procs, af);
  out.makespan_s = val;
  return out;
}

std::string calibration_to_json_text(const CalibrationCurve& curve,
                                     const CrossPoints& cp) {
  auto line = [](const FittedLine& l) {
    return ordered_json{{"slope", l.slope}, {"intercept", l.intercept}};
  };
  auto executor = [&](const ExecutorCurve& c) {
    ordered_json buckets = ordered_json::array();
    for (const auto& b : c.buckets) {
      buckets.push_back({{"psgs", b.psgs},
                         {"mean_latency_s", b.mean_latency_s},
                         {"max_psgs", b.max_psgs},
                         {"max_latency_s", b.max_latency_s}});
    }
    return ordered_json{
        {"average", line(c.average)}, {"maximal", line(c.maximal)},
        {"buckets", buckets}};
  };
  auto opt = [](const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
  };
  ordered_json j;
  j["cpu"] = executor(curve.cpu);
  j["gpu"] = executor(curve.gpu);
  j["cross_points"] = {{"cpu_preferred", opt(cp.cpu_preferred)},
                       {"gpu_preferred", opt(cp.gpu_preferred)},
                       {"latency_preferred", opt(cp.latency_preferred)},
                       {"throughput_preferred", opt(cp.throughput_preferred)}};
  return j.dump(2) + "\n";
}

LoadedCalibration calibration_from_json_text(const std::string& text,
                                             const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  auto line = [&](const ordered_json& l) {
    return FittedLine{l.at("slope").get<double>(), l.at("intercept").get<double>()};
  };
  auto executor = [&](const ordered_json& c) {
    ExecutorCurve curve;
    curve.average = line(c.at("average"));
    curve.maximal = line(c.at("maximal"));
    if (c.contains("buckets")) {
      for (const auto& b : c.at("buckets")) {
        curve.buckets.push_back({b.at("psgs").get<double>(),
                                 b.at("mean_latency_s").get<double>(),
                                 b.at("max_psgs").get<double>(),
                                 b.at("max_latency_s").get<double>()});
      }
    }
    return curve;
  };
  auto opt = [](const ordered_json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  LoadedCalibration out;
  try {
    out.curve.cpu = executor(j.at("cpu"));
    out.curve.gpu = executor(j.at("gpu"));
    const auto& cp = j.at("cross_points");
    out.cross.cpu_preferred = opt(cp.at("cpu_preferred"));
    out.cross.gpu_preferred = opt(cp.at("gpu_preferred"));
    out.cross.latency_preferred = opt(cp.at("latency_preferred"));
    out.cross.throughput_preferred = opt(cp.at("throughput_preferred"));
  } catch (const ordered_json::exception& e) {
    throw ParseError(origin + ": bad calibration json: " + e.what());
  }
  return out;
}

}  // namespace qv
