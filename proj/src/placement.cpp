#include "qv/placement.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "qv/error.hpp"

namespace qv {

using ordered_json = nlohmann::ordered_json;

const char* tier_name(Tier t) {
  switch (t) {
    case Tier::gpu: return "gpu";
    case Tier::host: return "host";
    case Tier::disk: return "disk";
  }
  return "?";
}

std::int64_t encode_location(const ClusterTopology& topo, std::uint32_t server,
                             Tier tier, std::uint32_t device) {
  std::int64_t stride = topo.gpus_per_server + 2;
  std::int64_t base = static_cast<std::int64_t>(server) * stride;
  switch (tier) {
    case Tier::gpu: return base + device;
    case Tier::host: return base + topo.gpus_per_server;
    case Tier::disk: return base + topo.gpus_per_server + 1;
  }
  throw Error("bad tier");
}

Location decode_location(const ClusterTopology& topo, std::int64_t id) {
  std::int64_t stride = topo.gpus_per_server + 2;
  Location loc;
  loc.server = static_cast<std::uint32_t>(id / stride);
  std::int64_t slot = id % stride;
  if (slot < topo.gpus_per_server) {
    loc.tier = Tier::gpu;
    loc.device = static_cast<std::uint32_t>(slot);
  } else if (slot == topo.gpus_per_server) {
    loc.tier = Tier::host;
  } else {
    loc.tier = Tier::disk;
  }
  return loc;
}

void PlacementPlan::validate(const ClusterTopology& topo) const {
  std::map<std::int64_t, std::uint64_t> counts;
  for (std::uint64_t f = 0; f < feature_count; ++f) {
    if (locations[f].empty()) {
      throw Error("feature " + std::to_string(f) + " has no location");
    }
    for (const Location& loc : locations[f]) {
      ++counts[encode_location(topo, loc.server, loc.tier, loc.device)];
    }
  }
  for (const auto& [id, count] : counts) {
    Location loc = decode_location(topo, id);
    std::uint64_t cap = loc.tier == Tier::gpu    ? topo.gpu_feature_capacity
                        : loc.tier == Tier::host ? topo.host_feature_capacity
                                                 : topo.disk_feature_capacity;
    if (count > cap) {
      throw Error(std::string("placement overfills ") + tier_name(loc.tier) +
                  " on server " + std::to_string(loc.server) + ": " +
                  std::to_string(count) + " > " + std::to_string(cap));
    }
  }
}

namespace {

// Rank features by FAP descending, ids ascending on ties.
std::vector<NodeId> fap_ranking(const FapTable& fap) {
  std::vector<NodeId> ranks(fap.values.size());
  std::iota(ranks.begin(), ranks.end(), NodeId{0});
  std::stable_sort(ranks.begin(), ranks.end(), [&](NodeId a, NodeId b) {
    if (fap.values[a] != fap.values[b]) return fap.values[a] > fap.values[b];
    return a < b;
  });
  return ranks;
}

// Assigns a server's GPU range. With NVLink the range is partitioned across
// the GPUs of one NUMA group, greedily balancing summed FAP (hottest first,
// lowest-sum GPU wins, slot index breaks ties), then the same assignment is
// replicated across every NUMA group. Without NVLink the whole range is
// replicated on every GPU of the server.
void place_gpu_range(std::span<const NodeId> range, const FapTable& fap,
                     const ClusterTopology& topo, std::uint32_t server,
                     std::vector<std::vector<Location>>& locations) {
  const std::uint32_t gpn = topo.gpus_per_numa();
  if (range.empty() || topo.gpus_per_server == 0) return;

  if (topo.nvlink_within_numa) {
    std::vector<double> load(gpn, 0.0);
    std::vector<std::uint64_t> used(gpn, 0);
    for (NodeId f : range) {
      std::uint32_t best = gpn;
      for (std::uint32_t s = 0; s < gpn; ++s) {
        if (used[s] >= topo.gpu_feature_capacity) continue;
        if (best == gpn || load[s] < load[best]) best = s;
      }
      if (best == gpn) throw Error("gpu range exceeds numa group capacity");
      load[best] += fap.values[f];
      ++used[best];
      for (std::uint32_t group = 0; group < topo.numa_per_server; ++group) {
        locations[f].push_back({server, Tier::gpu, group * gpn + best, false});
      }
    }
  } else {
    for (NodeId f : range) {
      for (std::uint32_t d = 0; d < topo.gpus_per_server; ++d) {
        locations[f].push_back({server, Tier::gpu, d, false});
      }
    }
  }
}

void canonicalize(PlacementPlan& plan) {
  for (auto& locs : plan.locations) {
    std::sort(locs.begin(), locs.end(), [](const Location& a, const Location& b) {
      if (a.server != b.server) return a.server < b.server;
      if (a.tier != b.tier) return a.tier < b.tier;
      return a.device < b.device;
    });
    for (std::size_t i = 0; i < locs.size(); ++i) locs[i].replica = i > 0;
  }
}

}  // namespace

PlacementPlan plan_placement(const FapTable& fap, const ClusterTopology& topo) {
  topo.validate();
  const std::uint64_t n = fap.values.size();
  if (n == 0) throw ValidationError("placement needs at least one feature");

  std::vector<NodeId> ranks = fap_ranking(fap);

  // Distinct features the GPU tier of one server can hold. Without NVLink
  // the GPUs replicate, so only N_g distinct features fit on the tier.
  const std::uint64_t gpn = topo.gpus_per_numa();
  const std::uint64_t gpu_range_size =
      topo.gpus_per_server == 0
          ? 0
          : (topo.nvlink_within_numa ? gpn * topo.gpu_feature_capacity
                                     : topo.gpu_feature_capacity);

  PlacementPlan plan;
  plan.feature_count = n;
  plan.locations.resize(n);

  auto place_server_run = [&](std::uint32_t server, std::span<const NodeId> run) {
    std::uint64_t g = std::min<std::uint64_t>(run.size(), gpu_range_size);
    place_gpu_range(run.subspan(0, g), fap, topo, server, plan.locations);
    std::uint64_t h = std::min<std::uint64_t>(run.size() - g,
                                              topo.host_feature_capacity);
    for (std::uint64_t i = 0; i < h; ++i) {
      plan.locations[run[g + i]].push_back({server, Tier::host, 0, false});
    }
    for (std::uint64_t i = g + h; i < run.size(); ++i) {
      plan.locations[run[i]].push_back({server, Tier::disk, 0, false});
    }
  };

  if (!topo.infiniband) {
    // No fast interconnect: every server holds a full copy, hottest features
    // on the GPUs, then host memory, then disk.
    std::uint64_t per_server =
        gpu_range_size + topo.host_feature_capacity + topo.disk_feature_capacity;
    if (n > per_server) {
      throw PlacementError(
          "placement infeasible without infiniband: " + std::to_string(n) +
          " features vs per-server capacity " + std::to_string(per_server) +
          " (short by " + std::to_string(n - per_server) + ")");
    }
    for (std::uint32_t s = 0; s < topo.servers; ++s) {
      place_server_run(s, ranks);
    }
  } else {
    // Range-partition the hottest S*N_s features across servers. A nonzero
    // remainder means every server's gpu range and host are already full,
    // so the tail spills to per-server disk chunks.
    const std::uint64_t ns = gpu_range_size + topo.host_feature_capacity;
    const std::uint64_t partitioned = std::min<std::uint64_t>(n, topo.servers * ns);
    for (std::uint32_t s = 0; s < topo.servers; ++s) {
      std::uint64_t lo = std::min<std::uint64_t>(partitioned, s * ns);
      std::uint64_t hi = std::min<std::uint64_t>(partitioned, (s + 1) * ns);
      if (lo < hi) {
        place_server_run(s, std::span<const NodeId>(ranks).subspan(lo, hi - lo));
      }
    }
    const std::uint64_t remainder = n - partitioned;
    if (remainder > 0) {
      std::uint64_t disk_total =
          static_cast<std::uint64_t>(topo.servers) * topo.disk_feature_capacity;
      if (remainder > disk_total) {
        throw PlacementError(
            "placement infeasible: remainder " + std::to_string(remainder) +
            " features exceed total disk capacity " + std::to_string(disk_total) +
            " (short by " + std::to_string(remainder - disk_total) + ")");
      }
      // Balanced contiguous chunks, sizes differing by at most one.
      std::uint64_t base = remainder / topo.servers;
      std::uint64_t extra = remainder % topo.servers;
      std::uint64_t at = partitioned;
      for (std::uint32_t s = 0; s < topo.servers; ++s) {
        std::uint64_t len = base + (s < extra ? 1 : 0);
        for (std::uint64_t i = 0; i < len; ++i) {
          NodeId f = ranks[at + i];
          plan.locations[f].push_back({s, Tier::disk, 0, false});
        }
        at += len;
      }
    }
  }

  canonicalize(plan);
  plan.validate(topo);
  return plan;
}

LinkPath classify_link(const ClusterTopology& topo, const DeviceRef& reader,
                       std::int64_t location_id) {
  Location loc = decode_location(topo, location_id);
  LinkPath path;
  if (loc.server == reader.server) {
    switch (loc.tier) {
      case Tier::gpu:
        if (reader.tier == Tier::gpu) {
          if (reader.device == loc.device) {
            path.first = LinkClass::local;
          } else if (topo.gpus_per_numa() > 0 &&
                     reader.device / topo.gpus_per_numa() ==
                         loc.device / topo.gpus_per_numa()) {
            path.first = topo.nvlink_within_numa ? LinkClass::nvlink
                                                 : LinkClass::pcie;
          } else {
            path.first = LinkClass::upi;
          }
        } else {
          path.first = LinkClass::pcie;
        }
        break;
      case Tier::host:
        path.first = reader.tier == Tier::host ? LinkClass::local : LinkClass::pcie;
        break;
      case Tier::disk:
        path.first = LinkClass::disk;
        break;
    }
  } else {
    LinkClass net = topo.infiniband ? LinkClass::infiniband : LinkClass::ethernet;
    if (loc.tier == Tier::disk) {
      path.first = LinkClass::disk;
      path.second = net;
    } else {
      path.first = net;
    }
  }
  return path;
}

namespace {

bool translated_link(LinkClass c) {
  return c == LinkClass::pcie || c == LinkClass::upi ||
         c == LinkClass::infiniband || c == LinkClass::ethernet;
}

double path_setup_s(const ClusterTopology& topo, const LinkPath& p) {
  double s = topo.link(p.first).latency_s;
  if (p.second) s += topo.link(*p.second).latency_s;
  return s;
}

double path_bandwidth(const ClusterTopology& topo, const LinkPath& p) {
  double bw = topo.link(p.first).bandwidth_Bps;
  if (p.second) bw = std::min(bw, topo.link(*p.second).bandwidth_Bps);
  return bw;
}

bool path_translated(const LinkPath& p) {
  return translated_link(p.first) || (p.second && translated_link(*p.second));
}

DeviceRef reference_reader(const ClusterTopology& topo, std::uint32_t server) {
  if (topo.gpus_per_server > 0) return {server, Tier::gpu, 0};
  return {server, Tier::host, 0};
}

// Ranking cost for replica selection: a nominal 1 MiB read.
double nominal_read_cost(const ClusterTopology& topo, const DeviceRef& reader,
                         std::int64_t location_id) {
  LinkPath p = classify_link(topo, reader, location_id);
  return path_setup_s(topo, p) + 1048576.0 / path_bandwidth(topo, p);
}

}  // namespace

FeatureLookupTable build_lookup_table(const PlacementPlan& plan,
                                      const ClusterTopology& topo,
                                      std::uint32_t home_server) {
  if (home_server >= topo.servers) {
    throw ValidationError("home server out of range");
  }
  FeatureLookupTable table;
  table.home_server = home_server;
  table.gpus_per_server = topo.gpus_per_server;
  table.location_ids.resize(plan.feature_count);
  table.offsets.resize(plan.feature_count);

  // Dense per-location offsets in feature-id order: walking features in
  // ascending id and bumping a per-location cursor realizes exactly that.
  std::map<std::int64_t, std::uint64_t> cursor;

  DeviceRef reader = reference_reader(topo, home_server);
  for (std::uint64_t f = 0; f < plan.feature_count; ++f) {
    std::int64_t best_id = -1;
    double best_cost = 0.0;
    std::uint64_t best_offset = 0;
    for (const Location& loc : plan.locations[f]) {
      std::int64_t id = encode_location(topo, loc.server, loc.tier, loc.device);
      std::uint64_t off = cursor[id]++;  // every copy consumes a slot
      double cost = nominal_read_cost(topo, reader, id);
      if (best_id < 0 || cost < best_cost ||
          (cost == best_cost && id < best_id)) {
        best_id = id;
        best_cost = cost;
        best_offset = off;
      }
    }
    table.location_ids[f] = best_id;
    table.offsets[f] = best_offset;
  }
  return table;
}

std::uint64_t page_transitions(std::span<const std::uint64_t> offsets,
                               std::uint64_t page_size) {
  if (offsets.empty()) return 0;
  if (page_size == 0) throw ValidationError("page size must be > 0");
  std::uint64_t transitions = 1;
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] / page_size != offsets[i - 1] / page_size) ++transitions;
  }
  return transitions;
}

ReadPlan plan_reads(const FeatureLookupTable& table,
                    std::span<const NodeId> feature_ids,
                    std::uint64_t page_size) {
  if (page_size == 0) throw ValidationError("page size must be > 0");
  ReadPlan plan;
  plan.home_server = table.home_server;
  plan.page_size = page_size;

  std::map<std::int64_t, std::vector<std::uint64_t>> grouped;
  for (NodeId f : feature_ids) {
    if (f >= table.location_ids.size()) {
      throw ValidationError("feature id " + std::to_string(f) +
                            " outside lookup table");
    }
    grouped[table.location_ids[f]].push_back(table.offsets[f]);
  }
  for (auto& [id, offsets] : grouped) {
    std::sort(offsets.begin(), offsets.end());
    ReadPlan::LocationReads r;
    r.location_id = id;
    r.page_transitions = page_transitions(offsets, page_size);
    r.offsets = std::move(offsets);
    plan.per_location.push_back(std::move(r));
  }
  return plan;
}

FetchCost fetch_cost(const ReadPlan& plan, const ClusterTopology& topo,
                     std::uint64_t feature_bytes,
                     std::optional<DeviceRef> reader) {
  DeviceRef rd = reader ? *reader : reference_reader(topo, plan.home_server);
  FetchCost cost;
  std::int64_t max_loc = (topo.servers) * static_cast<std::int64_t>(topo.gpus_per_server + 2);
  for (const auto& lr : plan.per_location) {
    if (lr.location_id < 0 || lr.location_id >= max_loc) {
      throw ValidationError("unknown location id " +
                            std::to_string(lr.location_id));
    }
    LinkPath path = classify_link(topo, rd, lr.location_id);
    double bytes = static_cast<double>(feature_bytes) *
                   static_cast<double>(lr.offsets.size());
    double lat = path_setup_s(topo, path) + bytes / path_bandwidth(topo, path);
    if (path_translated(path)) {
      lat += topo.tlb_miss_penalty_s * static_cast<double>(lr.page_transitions);
    }
    cost.per_location_s.emplace_back(lr.location_id, lat);
    cost.total_s = std::max(cost.total_s, lat);
  }
  return cost;
}

std::string placement_to_json_text(const PlacementPlan& plan) {
  ordered_json j;
  j["feature_count"] = plan.feature_count;
  ordered_json feats = ordered_json::array();
  for (std::uint64_t f = 0; f < plan.feature_count; ++f) {
    ordered_json locs = ordered_json::array();
    for (const Location& loc : plan.locations[f]) {
      locs.push_back({{"server", loc.server},
                      {"tier", tier_name(loc.tier)},
                      {"device", loc.device},
                      {"replica", loc.replica}});
    }
    feats.push_back({{"id", f}, {"locations", locs}});
  }
  j["features"] = feats;
  return j.dump(2) + "\n";
}

void save_placement_csv(const PlacementPlan& plan, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write csv file: " + path);
  out << "feature_id,server,tier,device,replica\n";
  for (std::uint64_t f = 0; f < plan.feature_count; ++f) {
    for (const Location& loc : plan.locations[f]) {
      out << f << ',' << loc.server << ',' << tier_name(loc.tier) << ','
          << loc.device << ',' << (loc.replica ? 1 : 0) << '\n';
    }
  }
  if (!out) throw Error("short write to " + path);
}

std::string lookup_to_json_text(const FeatureLookupTable& table) {
  ordered_json j;
  j["home_server"] = table.home_server;
  j["gpus_per_server"] = table.gpus_per_server;
  ordered_json rows = ordered_json::array();
  for (std::size_t f = 0; f < table.location_ids.size(); ++f) {
    rows.push_back({{"feature", f},
                    {"location", table.location_ids[f]},
                    {"offset", table.offsets[f]}});
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

void save_lookup_csv(const FeatureLookupTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write csv file: " + path);
  out << "feature_id,location_id,offset\n";
  for (std::size_t f = 0; f < table.location_ids.size(); ++f) {
    out << f << ',' << table.location_ids[f] << ',' << table.offsets[f] << '\n';
  }
  if (!out) throw Error("short write to " + path);
}

}  // namespace qv
