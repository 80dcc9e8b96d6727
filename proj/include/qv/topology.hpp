#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace qv {

// Link classes from fastest to slowest under the default parameters.
// `local` covers reads that stay on the owning device.
enum class LinkClass : std::uint8_t {
  local = 0,
  nvlink,
  pcie,
  upi,
  infiniband,
  ethernet,
  disk,
};
constexpr std::size_t kLinkClassCount = 7;

const char* link_class_name(LinkClass c);

struct LinkSpec {
  double latency_s = 0.0;
  double bandwidth_Bps = 1.0;
};

// Declarative hardware model of a GPU-NUMA cluster. Capacities are in
// feature records. GPUs are indexed 0..G-1 per server; the NUMA group of
// gpu d is d / (G/C).
struct ClusterTopology {
  std::uint32_t servers = 1;
  std::uint32_t numa_per_server = 1;
  std::uint32_t gpus_per_server = 1;
  std::uint64_t gpu_feature_capacity = 0;
  std::uint64_t host_feature_capacity = 0;
  std::uint64_t disk_feature_capacity = 0;
  bool nvlink_within_numa = false;
  bool infiniband = false;
  std::array<LinkSpec, kLinkClassCount> links{};
  // Charged per page transition on address-translated paths
  // (pcie/upi/infiniband/ethernet).
  double tlb_miss_penalty_s = 1e-7;

  std::uint32_t gpus_per_numa() const { return gpus_per_server / numa_per_server; }

  const LinkSpec& link(LinkClass c) const {
    return links[static_cast<std::size_t>(c)];
  }

  void validate() const;
  static ClusterTopology with_defaults();
};

ClusterTopology load_topology(const std::string& path);
ClusterTopology topology_from_json_text(const std::string& text,
                                        const std::string& origin = "<inline>");
std::string topology_to_json_text(const ClusterTopology& topo);

}  // namespace qv
