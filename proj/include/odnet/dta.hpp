#pragma once

// Iterative logit-based traffic assignment.
//
// Each iteration adds the current minimum-cost path of every OD pair to its
// route set, splits demand over the set with p_j ~ C_j^-eta, loads link
// flows, and moves link travel times toward the volume-delay time with
// successive-averages weight 1/k. The run stops once neither travel time nor
// financial cost of any link changes by more than conv_eps (relative).

#include "odnet/kernels.hpp"
#include "odnet/network.hpp"
#include "odnet/odgen.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace odnet {

struct DtaParams {
    double eta = 1.0;
    int max_iterations = 20;
    double conv_eps = 0.01;
    double init_speed = 13.9;  // m/s; first-iteration time = length / init_speed
    double cost_floor = 1e-6;
    std::optional<CostWeights> weights;  // defaults to the network's
    Exec exec = Exec::serial;            // path searches per OD pair

    void validate() const;
};

struct RouteSet {
    int origin = 0;
    int dest = 0;
    std::vector<std::vector<int>> routes;  // link ids
    std::vector<double> costs;
    std::vector<double> probabilities;
};

struct AssignmentResult {
    std::vector<double> sensor_flows;       // by sensor id
    std::vector<double> link_flows;         // by link index
    std::vector<double> link_travel_times;  // by link index, final
    std::vector<RouteSet> route_sets;       // pairs with positive demand
    std::vector<std::size_t> route_counts_per_iteration;  // total routes after each iteration
    int iterations = 0;
    bool converged = false;

    // Demand-weighted mean route cost under the final link times.
    double mean_route_cost = 0.0;
};

// p_j = C_j^-eta / sum_i C_i^-eta. Throws DomainError if any C_j <= 0.
std::vector<double> logit_split(std::span<const double> costs, double eta);

// Link flows (by link index) from demand split over each pair's routes.
// Throws UnroutableDemandError for positive demand without routes.
std::vector<double> load_demand(const RoadNetwork& net, const OdMatrix& od, std::span<const RouteSet> route_sets);

std::vector<double> extract_sensor_flows(const RoadNetwork& net, std::span<const double> link_flows);

AssignmentResult run_dta(const RoadNetwork& net, const OdMatrix& od, const DtaParams& params = {});

// Delimited text: "# iterations=.. converged=.. eta=.. N=.. conv_eps=.." then sensor_id,flow.
void write_sensor_flows_csv(std::ostream& out, const AssignmentResult& res, const DtaParams& params);
std::vector<double> read_sensor_flows_csv(std::istream& in);

}  // namespace odnet
