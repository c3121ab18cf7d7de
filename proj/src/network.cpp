#include "odnet/network.hpp"

#include "odnet/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <tuple>

namespace odnet {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kZoneClassCount> kClassNames = {"Z1", "Z2", "Z3", "Z4", "Z5", "Z6", "Z7"};

std::string link_ctx(const Link& l) { return "link " + std::to_string(l.id); }

void check_finite_link(const Link& l) {
    const double vals[] = {l.length, l.capacity, l.free_flow_time, l.financial_cost, l.travel_time, l.flow};
    for (double v : vals)
        if (!std::isfinite(v)) throw InvalidLinkError(link_ctx(l) + ": non-finite attribute");
}

}  // namespace

std::string_view zone_class_name(ZoneClass c) { return kClassNames[static_cast<int>(c)]; }

std::optional<ZoneClass> parse_zone_class(std::string_view s) {
    for (int i = 0; i < kZoneClassCount; ++i)
        if (kClassNames[i] == s) return static_cast<ZoneClass>(i);
    return std::nullopt;
}

double general_cost(const Link& link, const CostWeights& w) {
    check_finite_link(link);
    return w.alpha * link.travel_time + w.beta * link.length + w.gamma * link.financial_cost;
}

double bpr_time(double free_flow_time, double flow, double capacity, const VdfParams& vdf) {
    if (!(capacity > 0.0) || !std::isfinite(capacity))
        throw InvalidLinkError("capacity must be positive, got " + std::to_string(capacity));
    if (!(flow >= 0.0) || !std::isfinite(flow))
        throw InvalidLinkError("flow must be finite and nonnegative, got " + std::to_string(flow));
    if (flow == 0.0) return free_flow_time;
    return free_flow_time * (1.0 + vdf.a * std::pow(flow / capacity, vdf.power));
}

double update_travel_time(Link& link, const VdfParams& vdf) {
    if (!(link.capacity > 0.0)) throw InvalidLinkError(link_ctx(link) + ": capacity must be positive");
    link.travel_time = bpr_time(link.free_flow_time, link.flow, link.capacity, vdf);
    return link.travel_time;
}

// ---------------------------------------------------------------------------

void RoadNetwork::validate() {
    node_idx_.clear();
    link_idx_.clear();
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (!node_idx_.emplace(nodes[i].id, i).second)
            throw ParseError("duplicate node id " + std::to_string(nodes[i].id));

    for (std::size_t i = 0; i < links.size(); ++i) {
        const Link& l = links[i];
        if (!link_idx_.emplace(l.id, i).second) throw ParseError("duplicate link id " + std::to_string(l.id));
        if (!node_idx_.contains(l.from))
            throw ParseError(link_ctx(l) + ": references missing node " + std::to_string(l.from));
        if (!node_idx_.contains(l.to))
            throw ParseError(link_ctx(l) + ": references missing node " + std::to_string(l.to));
        try {
            check_finite_link(l);
        } catch (const InvalidLinkError& e) {
            throw ParseError(e.what());
        }
        if (!(l.length > 0.0)) throw ParseError(link_ctx(l) + ": length must be positive");
        if (!(l.capacity > 0.0)) throw ParseError(link_ctx(l) + ": capacity must be positive");
        if (!(l.free_flow_time > 0.0)) throw ParseError(link_ctx(l) + ": free_flow_time must be positive");
        if (l.financial_cost < 0.0) throw ParseError(link_ctx(l) + ": financial_cost must be >= 0");
        if (l.flow < 0.0) throw ParseError(link_ctx(l) + ": flow must be >= 0");
        if (l.travel_time < l.free_flow_time)
            throw ParseError(link_ctx(l) + ": travel_time below free_flow_time");
    }

    centroid_.assign(nodes.size(), false);
    for (std::size_t z = 0; z < zones.size(); ++z) {
        const Zone& zone = zones[z];
        const std::string ctx = "zone " + std::to_string(zone.id);
        if (zone.id != static_cast<int>(z)) throw ParseError(ctx + ": zone ids must be dense 0..Z-1 in order");
        auto n = node_idx_.find(zone.node);
        if (n == node_idx_.end()) throw ParseError(ctx + ": references missing node " + std::to_string(zone.node));
        if (nodes[n->second].kind != NodeKind::zone_connector)
            throw ParseError(ctx + ": node " + std::to_string(zone.node) + " is not a zone connector");
        if (centroid_[n->second]) throw ParseError(ctx + ": node " + std::to_string(zone.node) + " shared by two zones");
        centroid_[n->second] = true;
        if (zone.attach_links.empty()) throw ParseError(ctx + ": has no attach links");
        for (int lid : zone.attach_links) {
            auto li = link_idx_.find(lid);
            if (li == link_idx_.end()) throw ParseError(ctx + ": references missing link " + std::to_string(lid));
            const Link& l = links[li->second];
            if (l.from != zone.node && l.to != zone.node)
                throw ParseError(ctx + ": attach link " + std::to_string(lid) + " does not touch its centroid");
        }
    }

    for (std::size_t s = 0; s < sensors.size(); ++s) {
        const std::string ctx = "sensor " + std::to_string(sensors[s].id);
        if (sensors[s].id != static_cast<int>(s)) throw ParseError(ctx + ": sensor ids must be dense 0..S-1 in order");
        if (!link_idx_.contains(sensors[s].link))
            throw ParseError(ctx + ": references missing link " + std::to_string(sensors[s].link));
    }

    const double ws[] = {cost_weights.alpha, cost_weights.beta, cost_weights.gamma, vdf.a, vdf.power};
    for (double w : ws)
        if (!std::isfinite(w) || w < 0.0) throw ParseError("cost weights and vdf parameters must be finite and >= 0");

    out_.assign(nodes.size(), {});
    for (std::size_t i = 0; i < links.size(); ++i) out_[node_idx_.at(links[i].from)].push_back(i);
}

std::optional<std::size_t> RoadNetwork::find_link(int link_id) const {
    auto it = link_idx_.find(link_id);
    if (it == link_idx_.end()) return std::nullopt;
    return it->second;
}

std::size_t RoadNetwork::link_index(int link_id) const {
    auto it = link_idx_.find(link_id);
    if (it == link_idx_.end()) throw Error("unknown link id " + std::to_string(link_id));
    return it->second;
}

std::size_t RoadNetwork::node_index(int node_id) const {
    auto it = node_idx_.find(node_id);
    if (it == node_idx_.end()) throw Error("unknown node id " + std::to_string(node_id));
    return it->second;
}

bool RoadNetwork::is_centroid(int node_id) const { return centroid_[node_index(node_id)]; }

// ---------------------------------------------------------------------------

std::vector<double> link_costs(const RoadNetwork& net, const CostWeights& w) {
    std::vector<double> out(net.links.size());
    for (std::size_t i = 0; i < net.links.size(); ++i) out[i] = general_cost(net.links[i], w);
    return out;
}

std::optional<Route> shortest_path(const RoadNetwork& net, std::span<const double> costs, int origin_zone,
                                   int dest_zone) {
    if (costs.size() != net.links.size()) throw ShapeError("link cost vector does not match link count");
    if (origin_zone == dest_zone) return std::nullopt;
    const Zone& origin = net.zones.at(static_cast<std::size_t>(origin_zone));
    const Zone& dest = net.zones.at(static_cast<std::size_t>(dest_zone));
    const std::size_t src = net.node_index(origin.node);
    const std::size_t dst = net.node_index(dest.node);

    struct Label {
        double cost = 0.0;
        std::vector<int> path;
        bool set = false;
    };
    auto better = [](double c1, const std::vector<int>& p1, const Label& l) {
        if (!l.set) return true;
        if (c1 != l.cost) return c1 < l.cost;
        return p1 < l.path;
    };

    std::vector<Label> best(net.nodes.size());
    std::vector<std::size_t> version(net.nodes.size(), 0);
    using Entry = std::tuple<double, std::size_t, std::size_t>;  // cost, node, version
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;

    best[src] = {0.0, {}, true};
    queue.emplace(0.0, src, 0);

    auto on_path = [&](const std::vector<int>& path, int node_id) {
        if (net.nodes[src].id == node_id) return true;
        for (int lid : path)
            if (net.links[net.link_index(lid)].to == node_id) return true;
        return false;
    };
    auto contains = [](const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); };

    while (!queue.empty()) {
        auto [c, u, ver] = queue.top();
        queue.pop();
        if (ver != version[u]) continue;
        if (u == dst) continue;
        const Label label = best[u];
        for (std::size_t li : net.out_links()[u]) {
            const Link& l = net.links[li];
            if (u == src && !contains(origin.attach_links, l.id)) continue;
            const std::size_t v = net.node_index(l.to);
            if (net.is_centroid(l.to) && (v != dst || !contains(dest.attach_links, l.id))) continue;
            if (on_path(label.path, l.to)) continue;
            const double nc = label.cost + costs[li];
            std::vector<int> np = label.path;
            np.push_back(l.id);
            if (better(nc, np, best[v])) {
                best[v] = {nc, std::move(np), true};
                queue.emplace(nc, v, ++version[v]);
            }
        }
    }
    if (!best[dst].set) return std::nullopt;
    return Route{std::move(best[dst].path), best[dst].cost};
}

std::optional<Route> shortest_path(const RoadNetwork& net, int origin_zone, int dest_zone) {
    const auto costs = link_costs(net, net.cost_weights);
    return shortest_path(net, costs, origin_zone, dest_zone);
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& ctx) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(ctx + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(ctx + ": bad field '" + key + "': " + e.what());
    }
}

template <typename T>
T field_or(const json& obj, const char* key, T def, const std::string& ctx) {
    if (!obj.contains(key)) return def;
    return field<T>(obj, key, ctx);
}

const json& array_field(const json& doc, const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_array())
        throw ParseError(std::string("network: missing array '") + key + "'");
    return doc.at(key);
}

}  // namespace

RoadNetwork parse_network(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("network: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("network: top level must be an object");

    RoadNetwork net;
    for (const auto& n : array_field(doc, "nodes")) {
        const std::string ctx = "node entry";
        Node node;
        node.id = field<int>(n, "id", ctx);
        const auto kind = field_or<std::string>(n, "kind", "junction", "node " + std::to_string(node.id));
        if (kind == "junction")
            node.kind = NodeKind::junction;
        else if (kind == "zone_connector")
            node.kind = NodeKind::zone_connector;
        else
            throw ParseError("node " + std::to_string(node.id) + ": unknown kind '" + kind + "'");
        net.nodes.push_back(node);
    }
    for (const auto& j : array_field(doc, "links")) {
        Link l;
        l.id = field<int>(j, "id", "link entry");
        const std::string ctx = "link " + std::to_string(l.id);
        l.from = field<int>(j, "from", ctx);
        l.to = field<int>(j, "to", ctx);
        l.length = field<double>(j, "length", ctx);
        l.capacity = field<double>(j, "capacity", ctx);
        l.free_flow_time = field<double>(j, "free_flow_time", ctx);
        l.financial_cost = field_or<double>(j, "financial_cost", 0.0, ctx);
        l.travel_time = field_or<double>(j, "travel_time", l.free_flow_time, ctx);
        l.flow = field_or<double>(j, "flow", 0.0, ctx);
        net.links.push_back(l);
    }
    for (const auto& j : array_field(doc, "zones")) {
        Zone z;
        z.id = field<int>(j, "id", "zone entry");
        const std::string ctx = "zone " + std::to_string(z.id);
        const auto cls = parse_zone_class(field<std::string>(j, "class", ctx));
        if (!cls) throw ParseError(ctx + ": class must be one of Z1..Z7");
        z.cls = *cls;
        z.node = field<int>(j, "node", ctx);
        z.attach_links = field<std::vector<int>>(j, "attach_links", ctx);
        net.zones.push_back(std::move(z));
    }
    for (const auto& j : array_field(doc, "sensors")) {
        Sensor s;
        s.id = field<int>(j, "id", "sensor entry");
        s.link = field<int>(j, "link", "sensor " + std::to_string(s.id));
        net.sensors.push_back(s);
    }
    if (doc.contains("cost_weights")) {
        const auto& w = doc.at("cost_weights");
        net.cost_weights.alpha = field_or<double>(w, "alpha", 1.0, "cost_weights");
        net.cost_weights.beta = field_or<double>(w, "beta", 0.0, "cost_weights");
        net.cost_weights.gamma = field_or<double>(w, "gamma", 0.0, "cost_weights");
    }
    if (doc.contains("vdf")) {
        const auto& v = doc.at("vdf");
        net.vdf.a = field_or<double>(v, "a", 0.15, "vdf");
        net.vdf.power = field_or<double>(v, "power", 4.0, "vdf");
    }
    net.validate();
    return net;
}

RoadNetwork load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open network file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_network(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string dump_network(const RoadNetwork& net) {
    json doc;
    doc["nodes"] = json::array();
    for (const auto& n : net.nodes)
        doc["nodes"].push_back({{"id", n.id}, {"kind", n.kind == NodeKind::junction ? "junction" : "zone_connector"}});
    doc["links"] = json::array();
    for (const auto& l : net.links)
        doc["links"].push_back({{"id", l.id},
                                {"from", l.from},
                                {"to", l.to},
                                {"length", l.length},
                                {"capacity", l.capacity},
                                {"free_flow_time", l.free_flow_time},
                                {"financial_cost", l.financial_cost},
                                {"travel_time", l.travel_time},
                                {"flow", l.flow}});
    doc["zones"] = json::array();
    for (const auto& z : net.zones)
        doc["zones"].push_back({{"id", z.id},
                                {"class", std::string(zone_class_name(z.cls))},
                                {"node", z.node},
                                {"attach_links", z.attach_links}});
    doc["sensors"] = json::array();
    for (const auto& s : net.sensors) doc["sensors"].push_back({{"id", s.id}, {"link", s.link}});
    doc["cost_weights"] = {{"alpha", net.cost_weights.alpha},
                           {"beta", net.cost_weights.beta},
                           {"gamma", net.cost_weights.gamma}};
    doc["vdf"] = {{"a", net.vdf.a}, {"power", net.vdf.power}};
    return doc.dump(1);
}

void save_network(const RoadNetwork& net, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write network file " + path.string());
    out << dump_network(net) << '\n';
}

}  // namespace odnet
