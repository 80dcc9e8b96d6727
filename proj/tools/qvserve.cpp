// qvserve: workload-aware GNN-serving planner and simulator.
//
// Subcommands:
//   metrics   - compute the subgraph-size and access-probability tables
//   plan      - run feature placement and emit the lookup table
//   calibrate - fit latency curves and the four routing cross points
//   simulate  - run the serving simulator over a policy/rate sweep
//
// Exit codes: 0 success, 2 input error, 3 infeasible placement,
// 4 calibration failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qv/config.hpp"
#include "qv/error.hpp"
#include "qv/graph.hpp"
#include "qv/metrics.hpp"
#include "qv/oracles.hpp"
#include "qv/placement.hpp"
#include "qv/scheduler.hpp"
#include "qv/simulator.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct CliOverrides {
  std::string config_path;
  std::string graph;
  std::string topology;
  std::string policy;
  double threshold = -1.0;
  std::string threshold_name;
  std::int64_t seed = -1;
  double rate = -1.0;
  std::string out;
};

qv::RunConfig resolve_config(const CliOverrides& o) {
  qv::RunConfig c = o.config_path.empty() ? qv::RunConfig{}
                                          : qv::load_run_config(o.config_path);
  if (!o.graph.empty()) c.graph_path = o.graph;
  if (!o.topology.empty()) {
    c.topology_path = o.topology;
    c.topology_inline.reset();
  }
  if (!o.policy.empty()) c.policy = o.policy;
  if (o.threshold >= 0.0) c.threshold = o.threshold;
  if (!o.threshold_name.empty()) c.threshold_name = o.threshold_name;
  if (o.seed >= 0) {
    c.seed = static_cast<std::uint64_t>(o.seed);
    c.workload.rng_seed = c.seed;
  }
  if (o.rate > 0.0) c.workload.rate_per_s = o.rate;
  if (!o.out.empty()) c.out_dir = o.out;
  if (c.graph_path.empty()) throw qv::ConfigError("no graph path given");
  if (!fs::exists(c.graph_path)) {
    throw qv::ConfigError("graph file does not exist: " + c.graph_path);
  }
  fs::create_directories(c.out_dir);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw qv::Error("cannot write " + path.string());
  out << text;
}

std::vector<double> fap_seed_dist(const qv::RunConfig& cfg, const qv::Graph& g) {
  if (cfg.fap_seed_distribution == "uniform") return {};
  if (cfg.fap_seed_distribution == "out-degree") {
    std::vector<double> w(g.node_count);
    double total = static_cast<double>(g.edge_count);
    if (total <= 0.0) throw qv::ConfigError("out-degree seeds need edges");
    for (qv::NodeId i = 0; i < g.node_count; ++i) {
      w[i] = static_cast<double>(g.out_degree(i)) / total;
    }
    return w;
  }
  throw qv::ConfigError("unknown fap seed distribution: " +
                        cfg.fap_seed_distribution);
}

int cmd_metrics(const qv::RunConfig& cfg) {
  qv::Graph g = qv::load_graph(cfg.graph_path, cfg.graph_format, cfg.remap_ids);
  qv::TransitionView t = qv::transition_view(g);

  qv::PsgsTable psgs = qv::compute_psgs(t, cfg.sampling);
  std::vector<double> seed_w = fap_seed_dist(cfg, g);
  qv::FapTable fap =
      seed_w.empty()
          ? qv::compute_fap(t, cfg.fap_hops)
          : qv::compute_fap(t, cfg.fap_hops, std::span<const double>(seed_w));

  fs::path dir(cfg.out_dir);
  qv::save_table_binary((dir / "psgs.qvtab").string(), psgs.values,
                        cfg.sampling.hops());
  qv::save_table_csv((dir / "psgs.csv").string(), psgs.values);
  qv::save_table_binary((dir / "fap.qvtab").string(), fap.values, cfg.fap_hops);
  qv::save_table_csv((dir / "fap.csv").string(), fap.values);

  auto summary_json = [&](const qv::TableSummary& s) {
    ordered_json hottest = ordered_json::array();
    for (const auto& [id, v] : s.hottest) {
      hottest.push_back({{"node", id}, {"value", v}});
    }
    return ordered_json{
        {"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"hottest", hottest}};
  };
  if (cfg.access_prob_layers > 0) {
    qv::AccessProbTable ap =
        qv::compute_access_prob_ie(g, t, cfg.access_prob_layers);
    qv::save_table_binary((dir / "access_prob.qvtab").string(), ap.values,
                          cfg.access_prob_layers);
    qv::save_table_csv((dir / "access_prob.csv").string(), ap.values);
  }

  qv::TableSummary ps = qv::summarize_table(psgs.values, cfg.summary_top_k);
  qv::TableSummary fsu = qv::summarize_table(fap.values, cfg.summary_top_k);
  ordered_json j;
  j["node_count"] = g.node_count;
  j["edge_count"] = g.edge_count;
  j["psgs"] = summary_json(ps);
  j["fap"] = summary_json(fsu);
  write_text(dir / "metrics_summary.json", j.dump(2) + "\n");

  std::cout << "metrics: " << g.node_count << " nodes, " << g.edge_count
            << " edges\n"
            << "  psgs mean " << ps.mean << " max " << ps.max << " (node "
            << (ps.hottest.empty() ? 0 : ps.hottest[0].first) << ")\n"
            << "  fap  mean " << fsu.mean << " max " << fsu.max << " (node "
            << (fsu.hottest.empty() ? 0 : fsu.hottest[0].first) << ")\n";
  return 0;
}

int cmd_plan(const qv::RunConfig& cfg) {
  qv::Graph g = qv::load_graph(cfg.graph_path, cfg.graph_format, cfg.remap_ids);
  qv::TransitionView t = qv::transition_view(g);
  std::vector<double> seed_w = fap_seed_dist(cfg, g);
  qv::FapTable fap =
      seed_w.empty()
          ? qv::compute_fap(t, cfg.fap_hops)
          : qv::compute_fap(t, cfg.fap_hops, std::span<const double>(seed_w));
  qv::ClusterTopology topo = cfg.resolve_topology();

  qv::PlacementPlan plan = qv::plan_placement(fap, topo);
  qv::FeatureLookupTable table =
      qv::build_lookup_table(plan, topo, cfg.home_server);

  fs::path dir(cfg.out_dir);
  write_text(dir / "placement.json", qv::placement_to_json_text(plan));
  qv::save_placement_csv(plan, (dir / "placement.csv").string());
  write_text(dir / "lookup.json", qv::lookup_to_json_text(table));
  qv::save_lookup_csv(table, (dir / "lookup.csv").string());
  write_text(dir / "topology.json", qv::topology_to_json_text(topo));

  std::cout << "plan: " << plan.feature_count << " features placed across "
            << topo.servers << " server(s)\n";
  return 0;
}

int cmd_calibrate(const qv::RunConfig& cfg) {
  qv::Graph g = qv::load_graph(cfg.graph_path, cfg.graph_format, cfg.remap_ids);
  qv::TransitionView t = qv::transition_view(g);
  qv::PsgsTable psgs = qv::compute_psgs(t, cfg.sampling);

  qv::CalibrationWorkload w;
  w.psgs = &psgs;
  w.node_count = g.node_count;
  w.bucket_batch_sizes = cfg.calibration_batch_sizes;
  w.rng_seed = cfg.seed;

  qv::Executor cpu =
      cfg.cpu_use_sampler
          ? qv::sampler_cost_executor(t, cfg.sampling, cfg.cpu_setup_s,
                                      cfg.cpu_per_instance_s)
          : qv::linear_model_executor(cfg.cpu_setup_s, cfg.cpu_per_instance_s);
  qv::Executor gpu =
      qv::linear_model_executor(cfg.gpu_setup_s, cfg.gpu_per_instance_s);

  qv::CalibrationCurve curve =
      qv::calibrate(w, cpu, gpu, cfg.calibration_repetitions);
  qv::CrossPoints cp = qv::cross_points(curve);

  fs::path dir(cfg.out_dir);
  write_text(dir / "calibration.json", qv::calibration_to_json_text(curve, cp));

  auto show = [](const char* name, const std::optional<double>& v) {
    std::cout << "  " << name << ": ";
    if (v) {
      std::cout << *v << "\n";
    } else {
      std::cout << "absent\n";
    }
  };
  std::cout << "calibrate: cpu avg " << curve.cpu.average.intercept << " + "
            << curve.cpu.average.slope << "*psgs; gpu avg "
            << curve.gpu.average.intercept << " + " << curve.gpu.average.slope
            << "*psgs\n";
  show("cpu-preferred", cp.cpu_preferred);
  show("gpu-preferred", cp.gpu_preferred);
  show("latency-preferred", cp.latency_preferred);
  show("throughput-preferred", cp.throughput_preferred);
  return 0;
}

qv::PolicySpec resolve_policy(const qv::RunConfig& cfg, const std::string& name,
                              const qv::CalibrationCurve* curve,
                              const qv::CrossPoints* cp) {
  qv::PolicySpec spec;
  spec.kind = qv::policy_from_name(name);
  spec.count_threshold = cfg.fixed_batch_count_threshold;
  if (spec.kind == qv::Policy::psgs_strict || spec.kind == qv::Policy::psgs_loose) {
    if (cfg.threshold) {
      spec.threshold = *cfg.threshold;
    } else {
      if (curve == nullptr || cp == nullptr) {
        throw qv::ConfigError(
            "psgs policies need an explicit threshold or a calibration file");
      }
      std::string pick = cfg.threshold_name.value_or(
          spec.kind == qv::Policy::psgs_strict ? "latency" : "throughput");
      spec.threshold = qv::resolve_threshold(*curve, *cp, pick);
    }
  }
  return spec;
}

int cmd_simulate(const qv::RunConfig& cfg) {
  qv::Graph g = qv::load_graph(cfg.graph_path, cfg.graph_format, cfg.remap_ids);
  qv::TransitionView t = qv::transition_view(g);
  qv::PsgsTable psgs = qv::compute_psgs(t, cfg.sampling);
  std::vector<double> seed_w = fap_seed_dist(cfg, g);
  qv::FapTable fap =
      seed_w.empty()
          ? qv::compute_fap(t, cfg.fap_hops)
          : qv::compute_fap(t, cfg.fap_hops, std::span<const double>(seed_w));
  qv::ClusterTopology topo = cfg.resolve_topology();
  qv::PlacementPlan plan = qv::plan_placement(fap, topo);

  std::optional<qv::LoadedCalibration> cal;
  if (cfg.calibration_path) {
    std::ifstream in(*cfg.calibration_path);
    if (!in) {
      throw qv::ConfigError("cannot open calibration file: " +
                            *cfg.calibration_path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    cal = qv::calibration_from_json_text(ss.str(), *cfg.calibration_path);
  }
  const qv::CalibrationCurve* curve = cal ? &cal->curve : nullptr;
  const qv::CrossPoints* cp = cal ? &cal->cross : nullptr;

  std::vector<qv::DeviceModel> devices = cfg.devices;
  if (devices.empty()) {
    // Default devices take their sampling costs from the calibration
    // section so routing thresholds and simulated executors agree.
    devices.push_back(
        {qv::ProcClass::cpu, 2, cfg.cpu_setup_s, cfg.cpu_per_instance_s,
         1e-5, 1e-8, 0, 0});
    devices.push_back(
        {qv::ProcClass::gpu, 2, cfg.gpu_setup_s, cfg.gpu_per_instance_s,
         1e-5, 1e-9, 0, 0});
  }

  qv::SimInputs inputs;
  inputs.graph = &g;
  inputs.transition = &t;
  inputs.psgs = &psgs;
  inputs.sampling = &cfg.sampling;
  inputs.plan = &plan;
  inputs.topo = &topo;
  inputs.feature_bytes = cfg.feature_bytes;
  inputs.page_size = cfg.page_size;

  std::vector<std::string> policy_names =
      cfg.sweep_policies.empty() ? std::vector<std::string>{cfg.policy}
                                 : cfg.sweep_policies;
  std::vector<double> rates = cfg.sweep_rates.empty()
                                  ? std::vector<double>{cfg.workload.rate_per_s}
                                  : cfg.sweep_rates;
  std::vector<qv::PolicySpec> specs;
  for (const auto& name : policy_names) {
    specs.push_back(resolve_policy(cfg, name, curve, cp));
  }

  std::vector<qv::SweepCell> cells =
      qv::sweep(inputs, cfg.workload, devices, specs, rates, cfg.sweep_parallel);

  fs::path dir(cfg.out_dir);
  ordered_json index = ordered_json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const qv::SweepCell& c = cells[i];
    std::string stem = std::string("sim_") + qv::policy_name(c.policy.kind) +
                       "_r" + std::to_string(i);
    write_text(dir / (stem + ".json"), qv::report_to_json_text(c.report));
    qv::save_latencies_csv(c.report, (dir / (stem + "_latency.csv")).string());
    qv::save_cdf_csv(c.report, (dir / (stem + "_cdf.csv")).string());
    qv::save_queue_csv(c.report, (dir / (stem + "_queue.csv")).string());
    index.push_back({{"policy", qv::policy_name(c.policy.kind)},
                     {"rate", c.rate_per_s},
                     {"p99_s", c.report.p99_s},
                     {"throughput", c.report.achieved_throughput},
                     {"files", stem}});
    std::cout << "simulate: " << qv::policy_name(c.policy.kind) << " @ "
              << c.rate_per_s << " req/s -> p99 " << c.report.p99_s * 1e3
              << " ms, throughput " << c.report.achieved_throughput
              << " req/s\n";
  }
  write_text(dir / "sweep_index.json", index.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"workload-aware GNN serving planner and simulator"};
  app.require_subcommand(1);

  CliOverrides o;
  for (auto* sub : {app.add_subcommand("metrics", "compute workload metric tables"),
                    app.add_subcommand("plan", "plan feature placement"),
                    app.add_subcommand("calibrate", "fit latency curves and cross points"),
                    app.add_subcommand("simulate", "run the serving simulator")}) {
    sub->add_option("--config", o.config_path, "run config json");
    sub->add_option("--graph", o.graph, "graph file (edge-list text)");
    sub->add_option("--topology", o.topology, "topology json");
    sub->add_option("--policy", o.policy, "routing policy name");
    sub->add_option("--threshold", o.threshold, "explicit psgs threshold");
    sub->add_option("--threshold-name", o.threshold_name,
                    "cross point: cpu-preferred|gpu-preferred|latency|throughput");
    sub->add_option("--seed", o.seed, "rng seed");
    sub->add_option("--rate", o.rate, "offered request rate");
    sub->add_option("--out", o.out, "output directory");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    qv::RunConfig cfg = resolve_config(o);
    if (app.got_subcommand("metrics")) return cmd_metrics(cfg);
    if (app.got_subcommand("plan")) return cmd_plan(cfg);
    if (app.got_subcommand("calibrate")) return cmd_calibrate(cfg);
    if (app.got_subcommand("simulate")) return cmd_simulate(cfg);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const qv::PlacementError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const qv::CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const qv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
