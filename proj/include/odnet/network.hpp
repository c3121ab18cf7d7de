#pragma once

// Road network: nodes, links with volume-delay travel times, zones and
// sensors. Zones are gates (entrances, exits, curbs, parking structures)
// represented by a centroid node; demand enters and leaves the graph only
// through the zone's attach links.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace odnet {

enum class NodeKind { junction, zone_connector };

struct Node {
    int id = 0;
    NodeKind kind = NodeKind::junction;

    bool operator==(const Node&) const = default;
};

struct Link {
    int id = 0;
    int from = 0;
    int to = 0;
    double length = 0.0;          // m
    double capacity = 0.0;        // veh/h
    double free_flow_time = 0.0;  // s
    double financial_cost = 0.0;
    double travel_time = 0.0;     // s, current; >= free_flow_time
    double flow = 0.0;            // veh/h, current

    bool operator==(const Link&) const = default;
};

enum class ZoneClass {
    upper_entrance,  // Z1
    upper_exit,      // Z2
    lower_entrance,  // Z3
    lower_exit,      // Z4
    upper_curb,      // Z5
    lower_curb,      // Z6
    parking,         // Z7
};

inline constexpr int kZoneClassCount = 7;

std::string_view zone_class_name(ZoneClass c);  // "Z1".."Z7"
std::optional<ZoneClass> parse_zone_class(std::string_view s);

struct Zone {
    int id = 0;
    ZoneClass cls = ZoneClass::upper_entrance;
    int node = 0;  // centroid (zone-connector) node
    std::vector<int> attach_links;

    bool operator==(const Zone&) const = default;
};

struct Sensor {
    int id = 0;
    int link = 0;

    bool operator==(const Sensor&) const = default;
};

struct CostWeights {
    double alpha = 1.0;  // per second of travel time
    double beta = 0.0;   // per meter
    double gamma = 0.0;  // per currency unit

    bool operator==(const CostWeights&) const = default;
};

// t = t0 * (1 + a * (v / capacity)^power)
struct VdfParams {
    double a = 0.15;
    double power = 4.0;

    bool operator==(const VdfParams&) const = default;
};

// alpha*T + beta*L + gamma*Cf for the link's current travel time.
double general_cost(const Link& link, const CostWeights& w);

double bpr_time(double free_flow_time, double flow, double capacity, const VdfParams& vdf);

// Recomputes link.travel_time from link.flow and returns it.
double update_travel_time(Link& link, const VdfParams& vdf);

class RoadNetwork {
public:
    std::vector<Node> nodes;
    std::vector<Link> links;
    std::vector<Zone> zones;      // ids dense 0..Z-1, stored in id order
    std::vector<Sensor> sensors;  // ids dense 0..S-1, stored in id order
    CostWeights cost_weights;
    VdfParams vdf;

    // Rebuilds the id indexes and checks every type invariant. Throws ParseError.
    void validate();

    std::size_t link_index(int link_id) const;  // throws if unknown
    std::optional<std::size_t> find_link(int link_id) const;
    std::size_t node_index(int node_id) const;
    bool is_centroid(int node_id) const;

    // Outgoing link indices per node index; valid after validate().
    const std::vector<std::vector<std::size_t>>& out_links() const { return out_; }

    std::size_t zone_count() const { return zones.size(); }
    std::size_t sensor_count() const { return sensors.size(); }

    bool operator==(const RoadNetwork& o) const {
        return nodes == o.nodes && links == o.links && zones == o.zones && sensors == o.sensors &&
               cost_weights == o.cost_weights && vdf == o.vdf;
    }

private:
    std::unordered_map<int, std::size_t> link_idx_;
    std::unordered_map<int, std::size_t> node_idx_;
    std::vector<std::vector<std::size_t>> out_;
    std::vector<bool> centroid_;
};

struct Route {
    std::vector<int> links;  // link ids
    double cost = 0.0;
};

// Minimum general-cost simple path from origin's centroid to dest's centroid
// using the supplied per-link costs (indexed like net.links). Passes through
// no other centroid. Equal-cost ties resolve to the lexicographically
// smallest link-id sequence.
std::optional<Route> shortest_path(const RoadNetwork& net, std::span<const double> link_costs, int origin_zone,
                                   int dest_zone);

// Same, with costs taken from the links' current state and net.cost_weights.
std::optional<Route> shortest_path(const RoadNetwork& net, int origin_zone, int dest_zone);

std::vector<double> link_costs(const RoadNetwork& net, const CostWeights& w);

RoadNetwork load_network(const std::filesystem::path& path);
RoadNetwork parse_network(std::string_view text);
void save_network(const RoadNetwork& net, const std::filesystem::path& path);
std::string dump_network(const RoadNetwork& net);

}  // namespace odnet
