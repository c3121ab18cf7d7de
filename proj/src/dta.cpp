#include "odnet/dta.hpp"

#include "odnet/csv.hpp"
#include "odnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>

namespace odnet {

void DtaParams::validate() const {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("eta must be finite and >= 0");
    if (max_iterations < 1) throw DomainError("max_iterations must be >= 1");
    if (!(conv_eps > 0.0)) throw DomainError("conv_eps must be > 0");
    if (!(init_speed > 0.0)) throw DomainError("init_speed must be > 0");
    if (!(cost_floor > 0.0)) throw DomainError("cost_floor must be > 0");
}

std::vector<double> logit_split(std::span<const double> costs, double eta) {
    if (costs.empty()) return {};
    double min_log = std::numeric_limits<double>::infinity();
    for (double c : costs) {
        if (!(c > 0.0) || !std::isfinite(c))
            throw DomainError("logit requires positive finite route costs, got " + std::to_string(c));
        min_log = std::min(min_log, std::log(c));
    }
    // Shifting every log-cost by the minimum leaves the ratios unchanged.
    std::vector<double> p(costs.size());
    double total = 0.0;
    for (std::size_t j = 0; j < costs.size(); ++j) {
        p[j] = std::exp(-eta * (std::log(costs[j]) - min_log));
        total += p[j];
    }
    for (double& v : p) v /= total;
    return p;
}

std::vector<double> load_demand(const RoadNetwork& net, const OdMatrix& od, std::span<const RouteSet> route_sets) {
    if (od.zones != net.zone_count()) throw ShapeError("OD matrix does not match network zone count");
    std::map<std::pair<int, int>, const RouteSet*> by_pair;
    for (const auto& rs : route_sets) by_pair[{rs.origin, rs.dest}] = &rs;

    std::vector<double> flows(net.links.size(), 0.0);
    for (std::size_t i = 0; i < od.zones; ++i) {
        for (std::size_t j = 0; j < od.zones; ++j) {
            const double d = od.at(i, j);
            if (d <= 0.0) continue;
            auto it = by_pair.find({int(i), int(j)});
            if (it == by_pair.end() || it->second->routes.empty())
                throw UnroutableDemandError("no route for OD pair (" + std::to_string(i) + ", " + std::to_string(j) +
                                            ") with demand " + std::to_string(d));
            const RouteSet& rs = *it->second;
            if (rs.probabilities.size() != rs.routes.size())
                throw ShapeError("route set probabilities do not match its routes");
            for (std::size_t r = 0; r < rs.routes.size(); ++r) {
                const double share = d * rs.probabilities[r];
                for (int lid : rs.routes[r]) flows[net.link_index(lid)] += share;
            }
        }
    }
    return flows;
}

std::vector<double> extract_sensor_flows(const RoadNetwork& net, std::span<const double> link_flows) {
    if (link_flows.size() != net.links.size()) throw ShapeError("link flow vector does not match link count");
    std::vector<double> out(net.sensor_count());
    for (const Sensor& s : net.sensors) out[std::size_t(s.id)] = link_flows[net.link_index(s.link)];
    return out;
}

namespace {

double route_cost(const RoadNetwork& net, std::span<const double> link_cost, const std::vector<int>& route) {
    double c = 0.0;
    for (int lid : route) c += link_cost[net.link_index(lid)];
    return c;
}

std::vector<double> costs_for(const RoadNetwork& net, const CostWeights& w, std::span<const double> times,
                              std::span<const double> financial) {
    std::vector<double> c(net.links.size());
    for (std::size_t l = 0; l < c.size(); ++l) {
        c[l] = w.alpha * times[l] + w.beta * net.links[l].length + w.gamma * financial[l];
        if (!std::isfinite(c[l])) throw InvalidLinkError("link " + std::to_string(net.links[l].id) + ": non-finite cost");
    }
    return c;
}

}  // namespace

AssignmentResult run_dta(const RoadNetwork& net, const OdMatrix& od, const DtaParams& params) {
    params.validate();
    if (od.zones != net.zone_count()) throw ShapeError("OD matrix does not match network zone count");
    const CostWeights w = params.weights.value_or(net.cost_weights);

    AssignmentResult res;
    for (std::size_t i = 0; i < od.zones; ++i)
        for (std::size_t j = 0; j < od.zones; ++j) {
            const double d = od.at(i, j);
            if (!std::isfinite(d) || d < 0.0) throw DomainError("OD demand must be finite and >= 0");
            if (d > 0.0) res.route_sets.push_back({int(i), int(j), {}, {}, {}});
        }

    const std::size_t n_links = net.links.size();
    std::vector<double> times(n_links), financial(n_links);
    for (std::size_t l = 0; l < n_links; ++l) {
        times[l] = net.links[l].length / params.init_speed;
        financial[l] = net.links[l].financial_cost;
    }

    auto& sets = res.route_sets;
    std::vector<std::optional<Route>> found(sets.size());
    std::vector<std::exception_ptr> failures(sets.size());
    std::vector<double> flows(n_links, 0.0);

    for (int k = 1; k <= params.max_iterations; ++k) {
        const auto cost = costs_for(net, w, times, financial);

        auto search = [&](std::size_t p) {
            try {
                found[p] = shortest_path(net, cost, sets[p].origin, sets[p].dest);
            } catch (...) {
                failures[p] = std::current_exception();
            }
        };
        if (params.exec == Exec::parallel) {
            const auto n = static_cast<long long>(sets.size());
#pragma omp parallel for schedule(dynamic)
            for (long long p = 0; p < n; ++p) search(std::size_t(p));
        } else {
            for (std::size_t p = 0; p < sets.size(); ++p) search(p);
        }

        std::size_t total_routes = 0;
        for (std::size_t p = 0; p < sets.size(); ++p) {
            if (failures[p]) std::rethrow_exception(failures[p]);
            RouteSet& rs = sets[p];
            if (!found[p])
                throw UnroutableDemandError("no path for OD pair (" + std::to_string(rs.origin) + ", " +
                                            std::to_string(rs.dest) + ")");
            if (std::find(rs.routes.begin(), rs.routes.end(), found[p]->links) == rs.routes.end())
                rs.routes.push_back(std::move(found[p]->links));
            rs.costs.resize(rs.routes.size());
            for (std::size_t r = 0; r < rs.routes.size(); ++r)
                rs.costs[r] = std::max(params.cost_floor, route_cost(net, cost, rs.routes[r]));
            rs.probabilities = logit_split(rs.costs, params.eta);
            total_routes += rs.routes.size();
        }
        res.route_counts_per_iteration.push_back(total_routes);

        flows = load_demand(net, od, sets);

        double change = 0.0;
        const double weight = 1.0 / k;
        for (std::size_t l = 0; l < n_links; ++l) {
            const Link& link = net.links[l];
            const double target = bpr_time(link.free_flow_time, flows[l], link.capacity, net.vdf);
            const double next = (1.0 - weight) * times[l] + weight * target;
            if (!std::isfinite(next))
                throw InvalidLinkError("link " + std::to_string(link.id) + ": non-finite travel time");
            change = std::max(change, std::abs(next - times[l]) / times[l]);
            times[l] = next;
        }
        // Financial cost is static per link, so its relative change is zero.
        for (std::size_t l = 0; l < n_links; ++l) {
            const double prev = financial[l];
            const double next = net.links[l].financial_cost;
            if (prev > 0.0) change = std::max(change, std::abs(next - prev) / prev);
            financial[l] = next;
        }

        res.iterations = k;
        if (change < params.conv_eps) {
            res.converged = true;
            break;
        }
    }

    res.link_flows = flows;
    res.link_travel_times = times;
    res.sensor_flows = extract_sensor_flows(net, flows);

    const auto final_cost = costs_for(net, w, times, financial);
    double weighted = 0.0, total = 0.0;
    for (const auto& rs : sets) {
        const double d = od.at(rs.origin, rs.dest);
        for (std::size_t r = 0; r < rs.routes.size(); ++r)
            weighted += d * rs.probabilities[r] * route_cost(net, final_cost, rs.routes[r]);
        total += d;
    }
    res.mean_route_cost = total > 0.0 ? weighted / total : 0.0;
    return res;
}

void write_sensor_flows_csv(std::ostream& out, const AssignmentResult& res, const DtaParams& params) {
    out << "# iterations=" << res.iterations << " converged=" << (res.converged ? "true" : "false")
        << " eta=" << params.eta << " N=" << params.max_iterations << " conv_eps=" << params.conv_eps << '\n';
    out << "sensor_id,flow\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t s = 0; s < res.sensor_flows.size(); ++s) out << s << ',' << res.sensor_flows[s] << '\n';
}

std::vector<double> read_sensor_flows_csv(std::istream& in) {
    csv::Reader reader(in);
    reader.expect_columns({"sensor_id", "flow"});
    std::vector<double> flows;
    while (auto row = reader.next()) {
        const int id = row->integer(0);
        if (id != static_cast<int>(flows.size())) throw ParseError(row->context() + ": sensor ids must be dense and ordered");
        flows.push_back(row->number(1));
    }
    return flows;
}

}  // namespace odnet
