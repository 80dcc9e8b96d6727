#include "qv/topology.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qv/error.hpp"

namespace qv {

using ordered_json = nlohmann::ordered_json;

const char* link_class_name(LinkClass c) {
  switch (c) {
    case LinkClass::local: return "local";
    case LinkClass::nvlink: return "nvlink";
    case LinkClass::pcie: return "pcie";
    case LinkClass::upi: return "upi";
    case LinkClass::infiniband: return "infiniband";
    case LinkClass::ethernet: return "ethernet";
    case LinkClass::disk: return "disk";
  }
  return "?";
}

ClusterTopology ClusterTopology::with_defaults() {
  ClusterTopology t;
  auto set = [&](LinkClass c, double lat, double bw) {
    t.links[static_cast<std::size_t>(c)] = {lat, bw};
  };
  set(LinkClass::local, 0.0, 1e12);
  set(LinkClass::nvlink, 2e-6, 300e9);
  set(LinkClass::pcie, 1e-5, 16e9);
  set(LinkClass::upi, 5e-6, 20e9);
  set(LinkClass::infiniband, 2e-6, 12.5e9);
  set(LinkClass::ethernet, 5e-5, 1.25e9);
  set(LinkClass::disk, 1e-4, 0.5e9);
  return t;
}

void ClusterTopology::validate() const {
  if (servers < 1) throw ValidationError("topology: servers must be >= 1");
  if (numa_per_server < 1) {
    throw ValidationError("topology: numa_per_server must be >= 1");
  }
  if (gpus_per_server % numa_per_server != 0) {
    throw ValidationError(
        "topology: gpus_per_server must be divisible by numa_per_server");
  }
  for (std::size_t i = 0; i < kLinkClassCount; ++i) {
    if (!(links[i].bandwidth_Bps > 0.0)) {
      throw ValidationError(std::string("topology: non-positive bandwidth for ") +
                            link_class_name(static_cast<LinkClass>(i)));
    }
    if (links[i].latency_s < 0.0) {
      throw ValidationError(std::string("topology: negative latency for ") +
                            link_class_name(static_cast<LinkClass>(i)));
    }
  }
  if (tlb_miss_penalty_s < 0.0) {
    throw ValidationError("topology: negative tlb_miss_penalty_s");
  }
}

namespace {

ClusterTopology parse_topology(const ordered_json& j, const std::string& origin) {
  ClusterTopology t = ClusterTopology::with_defaults();
  try {
    t.servers = j.value("servers", t.servers);
    t.numa_per_server = j.value("numa_per_server", t.numa_per_server);
    t.gpus_per_server = j.value("gpus_per_server", t.gpus_per_server);
    t.gpu_feature_capacity = j.value("gpu_feature_capacity", t.gpu_feature_capacity);
    t.host_feature_capacity = j.value("host_feature_capacity", t.host_feature_capacity);
    t.disk_feature_capacity = j.value("disk_feature_capacity", t.disk_feature_capacity);
    t.nvlink_within_numa = j.value("nvlink_within_numa", t.nvlink_within_numa);
    t.infiniband = j.value("infiniband", t.infiniband);
    t.tlb_miss_penalty_s = j.value("tlb_miss_penalty_s", t.tlb_miss_penalty_s);
    if (j.contains("links")) {
      for (std::size_t i = 0; i < kLinkClassCount; ++i) {
        const char* name = link_class_name(static_cast<LinkClass>(i));
        if (j["links"].contains(name)) {
          const auto& l = j["links"][name];
          t.links[i].latency_s = l.value("latency_s", t.links[i].latency_s);
          t.links[i].bandwidth_Bps = l.value("bandwidth_Bps", t.links[i].bandwidth_Bps);
        }
      }
    }
  } catch (const ordered_json::exception& e) {
    throw ParseError(origin + ": bad topology json: " + e.what());
  }
  t.validate();
  return t;
}

}  // namespace

ClusterTopology topology_from_json_text(const std::string& text,
                                        const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return parse_topology(j, origin);
}

ClusterTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open topology file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return topology_from_json_text(ss.str(), path);
}

std::string topology_to_json_text(const ClusterTopology& topo) {
  ordered_json j;
  j["servers"] = topo.servers;
  j["numa_per_server"] = topo.numa_per_server;
  j["gpus_per_server"] = topo.gpus_per_server;
  j["gpu_feature_capacity"] = topo.gpu_feature_capacity;
  j["host_feature_capacity"] = topo.host_feature_capacity;
  j["disk_feature_capacity"] = topo.disk_feature_capacity;
  j["nvlink_within_numa"] = topo.nvlink_within_numa;
  j["infiniband"] = topo.infiniband;
  j["tlb_miss_penalty_s"] = topo.tlb_miss_penalty_s;
  ordered_json links;
  for (std::size_t i = 0; i < kLinkClassCount; ++i) {
    links[link_class_name(static_cast<LinkClass>(i))] = {
        {"latency_s", topo.links[i].latency_s},
        {"bandwidth_Bps", topo.links[i].bandwidth_Bps},
    };
  }
  j["links"] = links;
  return j.dump(2) + "\n";
}

}  // namespace qv
