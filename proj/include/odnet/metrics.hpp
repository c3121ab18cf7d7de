#pragma once

// Closed-loop flow errors over sensors and median-flow sensor grouping.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace odnet {

struct FlowErrors {
    double mse = 0.0;
    double rmse = 0.0;
    std::optional<double> rrmse;  // percent; empty when mean real flow is 0
};

FlowErrors flow_errors(std::span<const double> real, std::span<const double> predicted);

enum class FlowLevel { low, medium, high };

struct SensorGrouping {
    double low_max = 36.0;      // [0, 36]
    double medium_max = 175.5;  // (36, 175.5]; above is high
    std::vector<FlowLevel> level;  // by sensor id
    std::vector<double> median;

    std::vector<std::size_t> members(FlowLevel l) const;
};

double median(std::vector<double> values);

// daily_flows[s] is sensor s's hourly series over the evaluation day.
SensorGrouping group_sensors(const std::vector<std::vector<double>>& daily_flows);

struct GroupedRrmse {
    std::optional<double> low, medium, high;  // empty: group absent or zero mean
    std::vector<std::string> warnings;
};

GroupedRrmse grouped_rrmse(std::span<const double> real, std::span<const double> predicted,
                           const SensorGrouping& grouping);

struct HourReport {
    std::string label;  // hour index, or the name of an aggregate row
    FlowErrors errors;
    GroupedRrmse groups;
};

struct LoopReport {
    std::vector<HourReport> hours;
    HourReport mean_of_hours;  // arithmetic mean of the hourly values
    HourReport pooled;         // errors over all (hour, sensor) pairs at once
};

// Builds per-hour rows plus both aggregate rows. real[h] / predicted[h] are
// the sensor flow vectors of hour h.
LoopReport make_loop_report(std::span<const int> hours, const std::vector<std::vector<double>>& real,
                            const std::vector<std::vector<double>>& predicted, const SensorGrouping& grouping);

// hour,mse,rmse,rrmse,rrmse_lo,rrmse_me,rrmse_hi ; undefined values print as NA.
void write_report_csv(std::ostream& out, const LoopReport& report);

}  // namespace odnet
