#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qv/metrics.hpp"
#include "qv/topology.hpp"

namespace qv {

enum class Tier : std::uint8_t { gpu = 0, host = 1, disk = 2 };
const char* tier_name(Tier t);

struct Location {
  std::uint32_t server = 0;
  Tier tier = Tier::host;
  std::uint32_t device = 0;  // gpu index within server; 0 for host/disk
  bool replica = false;      // true for all but the canonical first copy
};

// Dense integer id for a (server, tier, device) slot:
//   server * (G + 2) + device        for gpu tiers
//   server * (G + 2) + G             for host
//   server * (G + 2) + G + 1         for disk
std::int64_t encode_location(const ClusterTopology& topo, std::uint32_t server,
                             Tier tier, std::uint32_t device);
Location decode_location(const ClusterTopology& topo, std::int64_t id);

// Feature -> set of locations. Feature ids are node ids; feature count
// equals node count.
struct PlacementPlan {
  std::uint64_t feature_count = 0;
  std::vector<std::vector<Location>> locations;  // per feature, canonical order

  // Throws when a device exceeds its capacity or a feature has no copy.
  void validate(const ClusterTopology& topo) const;
};

// FAP-sorted partition/replication across servers, NUMA groups and GPUs.
// Features are ranked by FAP descending (ties by ascending id).
//   - without InfiniBand every server must hold all features
//     (GPU range, then host, then disk); infeasible inputs throw
//     PlacementError naming the shortfall.
//   - with InfiniBand the hottest S*N_s features are range-partitioned
//     across servers (N_s = gpu range + host capacity) and the remainder
//     spills to per-server disk chunks.
//   - the per-server GPU range is partitioned across the GPUs of a NUMA
//     group when NVLink is present (greedy balance of summed FAP), else the
//     hottest N_g features are replicated on every GPU; either way the
//     range is replicated across NUMA groups.
PlacementPlan plan_placement(const FapTable& fap, const ClusterTopology& topo);

// Feature id -> (location id, offset). Offsets are record-granular and
// assigned densely per location in feature-id order. The chosen location is
// the cheapest replica as read from `home_server` (reference reader: GPU 0,
// or the host when the server has no GPUs), costed for a nominal 1 MiB read
// with the topology's own link parameters; ties break on location id.
struct FeatureLookupTable {
  std::uint32_t home_server = 0;
  std::uint32_t gpus_per_server = 0;
  std::vector<std::int64_t> location_ids;  // one per feature
  std::vector<std::uint64_t> offsets;      // one per feature
};

FeatureLookupTable build_lookup_table(const PlacementPlan& plan,
                                      const ClusterTopology& topo,
                                      std::uint32_t home_server);

// Reads grouped by location and sorted by offset, with the page-transition
// count the sorted order achieves (the number of distinct pages touched).
struct ReadPlan {
  std::uint32_t home_server = 0;
  std::uint64_t page_size = 8;
  struct LocationReads {
    std::int64_t location_id = 0;
    std::vector<std::uint64_t> offsets;  // non-decreasing
    std::uint64_t page_transitions = 0;
  };
  std::vector<LocationReads> per_location;  // sorted by location id
};

ReadPlan plan_reads(const FeatureLookupTable& table,
                    std::span<const NodeId> feature_ids,
                    std::uint64_t page_size = 8);

// Page transitions of an offset sequence in visit order: number of maximal
// runs of equal page, i.e. 1 + count of adjacent page changes.
std::uint64_t page_transitions(std::span<const std::uint64_t> offsets,
                               std::uint64_t page_size);

// A device capable of issuing reads.
struct DeviceRef {
  std::uint32_t server = 0;
  Tier tier = Tier::gpu;  // gpu or host
  std::uint32_t device = 0;
};

// A read path is one link, or disk + network for a remote disk.
struct LinkPath {
  LinkClass first = LinkClass::local;
  std::optional<LinkClass> second;
};

LinkPath classify_link(const ClusterTopology& topo, const DeviceRef& reader,
                       std::int64_t location_id);

// Cost of fetching `feature_bytes` per read over a planned read set:
// per location, latency = path setup + bytes / bandwidth + tlb penalty *
// page transitions (translated paths only). The total is the maximum over
// locations: aggregation completes when the slowest fetch does.
struct FetchCost {
  double total_s = 0.0;
  std::vector<std::pair<std::int64_t, double>> per_location_s;
};

FetchCost fetch_cost(const ReadPlan& plan, const ClusterTopology& topo,
                     std::uint64_t feature_bytes,
                     std::optional<DeviceRef> reader = {});

// JSON / CSV exports.
std::string placement_to_json_text(const PlacementPlan& plan);
void save_placement_csv(const PlacementPlan& plan, const std::string& path);
std::string lookup_to_json_text(const FeatureLookupTable& table);
void save_lookup_csv(const FeatureLookupTable& table, const std::string& path);

}  // namespace qv
