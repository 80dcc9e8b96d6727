#include "qv/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qv/error.hpp"

namespace qv {

using ordered_json = nlohmann::ordered_json;

ClusterTopology RunConfig::resolve_topology() const {
  if (topology_inline) return *topology_inline;
  if (topology_path) return load_topology(*topology_path);
  return ClusterTopology::with_defaults();
}

namespace {

GraphFormat format_from_name(const std::string& name) {
  if (name == "edge-list-text") return GraphFormat::edge_list_text;
  if (name == "csr-binary") return GraphFormat::csr_binary;
  throw ConfigError("unknown graph format: " + name);
}

ArrivalProcess arrival_from_name(const std::string& name) {
  if (name == "deterministic") return ArrivalProcess::deterministic;
  if (name == "poisson") return ArrivalProcess::poisson;
  throw ConfigError("unknown arrival process: " + name);
}

SeedDistKind seed_dist_from_name(const std::string& name) {
  if (name == "uniform") return SeedDistKind::uniform;
  if (name == "out-degree") return SeedDistKind::out_degree;
  if (name == "explicit") return SeedDistKind::explicit_weights;
  throw ConfigError("unknown seed distribution: " + name);
}

DeviceModel device_from_json(const ordered_json& j) {
  DeviceModel d;
  std::string kind = j.value("kind", std::string("cpu"));
  if (kind == "cpu") {
    d.kind = ProcClass::cpu;
  } else if (kind == "gpu") {
    d.kind = ProcClass::gpu;
  } else {
    throw ConfigError("unknown device kind: " + kind);
  }
  d.pipelines = j.value("pipelines", d.pipelines);
  d.sample_setup_s = j.value("sample_setup_s", d.sample_setup_s);
  d.sample_per_instance_s = j.value("sample_per_instance_s", d.sample_per_instance_s);
  d.infer_fixed_s = j.value("infer_fixed_s", d.infer_fixed_s);
  d.infer_per_node_s = j.value("infer_per_node_s", d.infer_per_node_s);
  d.server = j.value("server", d.server);
  d.device_index = j.value("device_index", d.device_index);
  return d;
}

}  // namespace

RunConfig run_config_from_json_text(const std::string& text,
                                    const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }

  RunConfig c;
  try {
    if (j.contains("graph")) {
      const auto& g = j["graph"];
      c.graph_path = g.value("path", c.graph_path);
      c.graph_format = format_from_name(g.value("format", std::string("edge-list-text")));
      c.remap_ids = g.value("remap_ids", c.remap_ids);
    }
    if (j.contains("topology")) {
      const auto& t = j["topology"];
      if (t.is_string()) {
        c.topology_path = t.get<std::string>();
      } else {
        c.topology_inline = topology_from_json_text(t.dump(), origin);
      }
    }
    if (j.contains("sampling")) {
      c.sampling.fanouts =
          j["sampling"].value("fanouts", std::vector<std::uint32_t>{2, 2});
    }
    if (j.contains("fap")) {
      c.fap_hops = j["fap"].value("hops", c.fap_hops);
      c.fap_seed_distribution =
          j["fap"].value("seed_distribution", c.fap_seed_distribution);
    }
    c.access_prob_layers = j.value("access_prob_layers", c.access_prob_layers);
    c.summary_top_k = j.value("summary_top_k", c.summary_top_k);
    if (j.contains("placement")) {
      const auto& p = j["placement"];
      c.feature_bytes = p.value("feature_bytes", c.feature_bytes);
      c.page_size = p.value("page_size", c.page_size);
      c.home_server = p.value("home_server", c.home_server);
    }
    if (j.contains("calibration")) {
      const auto& cal = j["calibration"];
      c.calibration_batch_sizes =
          cal.value("bucket_batch_sizes", c.calibration_batch_sizes);
      c.calibration_repetitions =
          cal.value("repetitions", c.calibration_repetitions);
      c.cpu_use_sampler = cal.value("cpu_use_sampler", c.cpu_use_sampler);
      c.cpu_setup_s = cal.value("cpu_setup_s", c.cpu_setup_s);
      c.cpu_per_instance_s = cal.value("cpu_per_instance_s", c.cpu_per_instance_s);
      c.gpu_setup_s = cal.value("gpu_setup_s", c.gpu_setup_s);
      c.gpu_per_instance_s = cal.value("gpu_per_instance_s", c.gpu_per_instance_s);
    }
    if (j.contains("policy")) {
      const auto& p = j["policy"];
      if (p.is_string()) {
        c.policy = p.get<std::string>();
      } else {
        c.policy = p.value("name", c.policy);
        if (p.contains("threshold") && !p["threshold"].is_null()) {
          c.threshold = p["threshold"].get<double>();
        }
        if (p.contains("threshold_name")) {
          c.threshold_name = p["threshold_name"].get<std::string>();
        }
        c.fixed_batch_count_threshold =
            p.value("count_threshold", c.fixed_batch_count_threshold);
      }
    }
    c.calibration_path = j.contains("calibration_file")
                             ? std::optional<std::string>(
                                   j["calibration_file"].get<std::string>())
                             : std::nullopt;
    if (j.contains("workload")) {
      const auto& w = j["workload"];
      c.workload.rate_per_s = w.value("rate", c.workload.rate_per_s);
      c.workload.arrival =
          arrival_from_name(w.value("arrival", std::string("deterministic")));
      c.workload.seed_dist =
          seed_dist_from_name(w.value("seed_distribution", std::string("uniform")));
      c.workload.seed_weights =
          w.value("seed_weights", std::vector<double>{});
      c.workload.total_requests = w.value("requests", c.workload.total_requests);
      c.workload.batch_deadline_s = w.value("deadline_s", c.workload.batch_deadline_s);
      c.workload.max_batch = w.value("max_batch", c.workload.max_batch);
    }
    if (j.contains("devices")) {
      for (const auto& d : j["devices"]) c.devices.push_back(device_from_json(d));
    }
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      c.sweep_policies = s.value("policies", c.sweep_policies);
      c.sweep_rates = s.value("rates", c.sweep_rates);
      c.sweep_parallel = s.value("parallel", c.sweep_parallel);
    }
    c.seed = j.value("seed", c.seed);
    c.workload.rng_seed = c.seed;
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const ordered_json::exception& e) {
    throw ParseError(origin + ": bad config: " + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return run_config_from_json_text(ss.str(), path);
}

}  // namespace qv
