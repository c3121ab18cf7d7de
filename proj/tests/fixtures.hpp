#pragma once

// Small hand-built networks shared by the test binaries.

#include "odnet/network.hpp"

#include <random>

namespace fixtures {

inline odnet::Link make_link(int id, int from, int to, double t0, double capacity = 1000.0, double length = 0.0) {
    odnet::Link l;
    l.id = id;
    l.from = from;
    l.to = to;
    l.length = length > 0.0 ? length : t0 * 13.9;
    l.capacity = capacity;
    l.free_flow_time = t0;
    l.travel_time = t0;
    return l;
}

// Origin centroid 0 and destination centroid 1 joined by two parallel links
// (ids 0 and 1), both attached to both zones. Sensors 0 and 1 sit on them.
inline odnet::RoadNetwork two_parallel(double t0_a, double t0_b, double capacity, double len_a = 0.0,
                                       double len_b = 0.0) {
    using namespace odnet;
    RoadNetwork net;
    net.nodes = {{0, NodeKind::zone_connector}, {1, NodeKind::zone_connector}};
    net.links = {make_link(0, 0, 1, t0_a, capacity, len_a), make_link(1, 0, 1, t0_b, capacity, len_b)};
    net.zones = {{0, ZoneClass::upper_entrance, 0, {0, 1}}, {1, ZoneClass::upper_curb, 1, {0, 1}}};
    net.sensors = {{0, 0}, {1, 1}};
    net.validate();
    return net;
}

// Two disjoint chains: zone 0 -> zone 1 over links 0,1,2 and zone 2 -> zone 3
// over links 3,4,5. Every OD pair has exactly one path. Links are 1 km long,
// so the first-iteration time estimate differs from the free-flow times.
inline odnet::RoadNetwork two_chains() {
    using namespace odnet;
    RoadNetwork net;
    for (int n = 0; n < 4; ++n) net.nodes.push_back({n, NodeKind::zone_connector});
    for (int n = 10; n < 14; ++n) net.nodes.push_back({n, NodeKind::junction});
    net.links = {make_link(0, 0, 10, 20.0, 1000.0, 1000.0), make_link(1, 10, 11, 60.0, 1800.0, 1000.0),
                 make_link(2, 11, 1, 20.0, 1000.0, 1000.0), make_link(3, 2, 12, 20.0, 1000.0, 1000.0),
                 make_link(4, 12, 13, 45.0, 900.0, 1000.0), make_link(5, 13, 3, 20.0, 1000.0, 1000.0)};
    net.zones = {{0, ZoneClass::upper_entrance, 0, {0}},
                 {1, ZoneClass::upper_curb, 1, {2}},
                 {2, ZoneClass::lower_entrance, 2, {3}},
                 {3, ZoneClass::lower_curb, 3, {5}}};
    net.sensors = {{0, 1}, {1, 4}, {2, 4}};
    net.validate();
    return net;
}

// Random graph with <= 10 nodes: origin centroid 0, destination centroid 1,
// a third centroid 2 that paths must not pass through, and junctions 3..n-1.
// Integer link costs make ties common.
struct RandomGraph {
    odnet::RoadNetwork net;
    std::vector<double> costs;
};

inline RandomGraph random_graph(std::uint64_t seed) {
    using namespace odnet;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> node_count(5, 10);
    std::uniform_int_distribution<int> cost(1, 5);
    std::bernoulli_distribution edge(0.35);
    const int n = node_count(rng);

    RandomGraph g;
    RoadNetwork& net = g.net;
    for (int v = 0; v < n; ++v) net.nodes.push_back({v, v < 3 ? NodeKind::zone_connector : NodeKind::junction});
    int id = 0;
    std::vector<int> o_attach, d_attach, c_attach;
    auto add = [&](int from, int to) {
        net.links.push_back(make_link(id, from, to, 10.0));
        g.costs.push_back(cost(rng));
        return id++;
    };
    for (int v = 3; v < n; ++v) {
        if (edge(rng) || v == 3) o_attach.push_back(add(0, v));
        if (edge(rng) || v == n - 1) d_attach.push_back(add(v, 1));
        if (edge(rng)) c_attach.push_back(add(v, 2));
        if (edge(rng)) c_attach.push_back(add(2, v));
        for (int u = 3; u < n; ++u)
            if (u != v && edge(rng)) add(v, u);
    }
    if (edge(rng)) {
        const int l = add(0, 1);
        o_attach.push_back(l);
        d_attach.push_back(l);
    }
    if (c_attach.empty()) c_attach.push_back(add(3, 2));
    net.zones = {{0, ZoneClass::upper_entrance, 0, o_attach},
                 {1, ZoneClass::upper_curb, 1, d_attach},
                 {2, ZoneClass::parking, 2, c_attach}};
    net.validate();
    return g;
}

}  // namespace fixtures
