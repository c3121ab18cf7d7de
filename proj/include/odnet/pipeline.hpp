#pragma once

// End-to-end orchestration: synthetic terminal networks and observations,
// dataset production (OD solve -> assignment -> sensor flows), closed-loop
// evaluation and capacity/cost scenario transforms.

#include "odnet/dta.hpp"
#include "odnet/kernels.hpp"
#include "odnet/metrics.hpp"
#include "odnet/network.hpp"
#include "odnet/neural.hpp"
#include "odnet/odgen.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <span>
#include <vector>

namespace odnet {

// Number of zones of each class Z1..Z7.
using ZoneCounts = std::array<int, kZoneClassCount>;

inline constexpr ZoneCounts kDemoZoneCounts = {1, 1, 1, 1, 1, 1, 1};
inline constexpr ZoneCounts kLaxZoneCounts = {4, 3, 4, 3, 7, 6, 5};

// Two one-way terminal loops (upper and lower level) with curbs and parking
// structures as stops along each loop, bypass links for route choice, and
// parking structures attached to both levels. Sensors cover every
// entrance/exit attach link, every parking level counter and one corridor link.
RoadNetwork generate_terminal_network(const ZoneCounts& counts);
RoadNetwork make_demo_network();
RoadNetwork make_lax_network();

// Free OD pairs without a directed path (should be empty for valid networks).
std::vector<std::pair<int, int>> unreachable_pairs(const RoadNetwork& net);

struct SyntheticDemandProfile {
    std::map<int, double> base_flows;  // origin zone -> veh/h at multiplier 1
    std::array<double, 24> diurnal{};
    int days = 30;
    std::uint64_t noise_seed = 42;
    double noise_sigma = 0.15;  // per-entry lognormal noise
    double day_sigma = 0.08;    // per-day level noise

    void validate() const;
};

// Base flows by zone class (entrances 800, parking 500, curbs 150 veh/h) and
// an airport-like diurnal curve.
SyntheticDemandProfile default_profile(const RoadNetwork& net);

// Hidden ground-truth OD per hour (days x 24).
std::vector<OdMatrix> generate_synthetic_ods(const RoadNetwork& net, const SyntheticDemandProfile& profile);

// Boundary observations of the hidden ODs; exactly balanceable by construction.
std::vector<FlowObservation> generate_synthetic_observations(const RoadNetwork& net,
                                                             const SyntheticDemandProfile& profile);

struct DatasetOptions {
    DtaParams dta;
    NnlsOptions nnls;
    bool require_feasible = false;
    Exec exec = Exec::parallel;  // across hours
};

// Chronological split: first floor(K * 5 / 6) samples train, the rest test.
void chronological_split(Dataset& data);

Dataset build_dataset(const RoadNetwork& net, std::span<const FlowObservation> observations,
                      const DatasetOptions& opts = {});

using OdPredictor = std::function<std::vector<double>(std::span<const double> sensor_flows)>;

OdPredictor nn_predictor(const NnModel& model);
OdPredictor constant_predictor(std::vector<double> od_vector);
// Looks up the dataset target whose input equals the flows exactly.
OdPredictor oracle_predictor(const Dataset& data);
std::vector<double> mean_target(const Dataset& data, std::span<const std::size_t> rows);

struct ClosedLoopResult {
    LoopReport report;
    std::vector<std::vector<double>> predicted;  // per hour sensor flows
    SensorGrouping grouping;
};

// Per hour: predictor(real flows) -> OD -> assignment -> predicted flows.
// The sensor grouping uses the medians of the supplied real flows.
ClosedLoopResult closed_loop_eval(const RoadNetwork& net, const OdPredictor& predictor, std::span<const int> hours,
                                  const std::vector<std::vector<double>>& real_flows, const DtaParams& dta,
                                  Exec exec = Exec::parallel);

enum class ScenarioKind { lane_closure, curbside_restriction };

struct ScenarioTransform {
    ScenarioKind kind = ScenarioKind::lane_closure;
    std::vector<int> links;
    double capacity_factor = 1.0;   // (0, 1]
    double extra_dwell_cost = 0.0;  // >= 0, added to financial cost
};

// Returns a modified copy; the input network is untouched.
RoadNetwork apply_scenario(const RoadNetwork& net, const ScenarioTransform& transform);

// Dataset file: "# samples=K sensors=S outputs=M train=T" then
// hour,split,x0..x{S-1},y0..y{M-1} with split in {train,test}.
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in);

struct ProfileOverrides {
    std::map<ZoneClass, double> base_by_class;
    std::optional<std::array<double, 24>> diurnal;
    std::optional<int> days;
    std::optional<double> noise_sigma;
    std::optional<double> day_sigma;
};

struct PipelineConfig {
    DtaParams dta;
    NnlsOptions nnls;
    TrainConfig train;
    ProfileOverrides profile;
};

// default_profile(net) with the overrides applied and the given noise seed.
SyntheticDemandProfile make_profile(const RoadNetwork& net, const ProfileOverrides& overrides,
                                    std::uint64_t seed);

// Overrides defaults from a JSON document with optional sections
// "dta", "nnls", "train", "profile". Unknown keys are rejected.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& text);

}  // namespace odnet
