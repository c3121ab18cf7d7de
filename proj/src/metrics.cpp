#include "odnet/metrics.hpp"

#include "odnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace odnet {

FlowErrors flow_errors(std::span<const double> real, std::span<const double> predicted) {
    if (real.size() != predicted.size()) throw ShapeError("real and predicted flow vectors differ in length");
    if (real.empty()) throw ShapeError("flow comparison needs at least one sensor");
    double sq = 0.0, sum = 0.0;
    for (std::size_t s = 0; s < real.size(); ++s) {
        if (!std::isfinite(real[s]) || !std::isfinite(predicted[s]) || real[s] < 0.0 || predicted[s] < 0.0)
            throw DomainError("flows must be finite and >= 0");
        sq += (real[s] - predicted[s]) * (real[s] - predicted[s]);
        sum += real[s];
    }
    const double n = static_cast<double>(real.size());
    FlowErrors e;
    e.mse = sq / n;
    e.rmse = std::sqrt(e.mse);
    const double mean = sum / n;
    if (mean > 0.0) e.rrmse = e.rmse / mean * 100.0;
    return e;
}

double median(std::vector<double> values) {
    if (values.empty()) throw DomainError("median of an empty series");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<std::size_t> SensorGrouping::members(FlowLevel l) const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < level.size(); ++s)
        if (level[s] == l) out.push_back(s);
    return out;
}

SensorGrouping group_sensors(const std::vector<std::vector<double>>& daily_flows) {
    SensorGrouping g;
    for (const auto& series : daily_flows) {
        const double m = median(series);
        g.median.push_back(m);
        if (m <= g.low_max)
            g.level.push_back(FlowLevel::low);
        else if (m <= g.medium_max)
            g.level.push_back(FlowLevel::medium);
        else
            g.level.push_back(FlowLevel::high);
    }
    return g;
}

GroupedRrmse grouped_rrmse(std::span<const double> real, std::span<const double> predicted,
                           const SensorGrouping& grouping) {
    if (real.size() != grouping.level.size() || predicted.size() != real.size())
        throw ShapeError("grouping does not cover every sensor");
    GroupedRrmse out;
    const std::pair<FlowLevel, std::optional<double>*> slots[] = {
        {FlowLevel::low, &out.low}, {FlowLevel::medium, &out.medium}, {FlowLevel::high, &out.high}};
    const char* names[] = {"low", "medium", "high"};
    int k = 0;
    for (auto [level, slot] : slots) {
        const auto idx = grouping.members(level);
        const char* name = names[k++];
        if (idx.empty()) continue;
        std::vector<double> r, p;
        for (std::size_t s : idx) {
            r.push_back(real[s]);
            p.push_back(predicted[s]);
        }
        const FlowErrors e = flow_errors(r, p);
        if (!e.rrmse) out.warnings.push_back(std::string(name) + " group has zero mean flow; excluded");
        *slot = e.rrmse;
    }
    return out;
}

namespace {

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
    double s = 0.0;
    int n = 0;
    for (const auto& v : values)
        if (v) {
            s += *v;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return s / n;
}

}  // namespace

LoopReport make_loop_report(std::span<const int> hours, const std::vector<std::vector<double>>& real,
                            const std::vector<std::vector<double>>& predicted, const SensorGrouping& grouping) {
    if (hours.size() != real.size() || real.size() != predicted.size())
        throw ShapeError("report inputs differ in hour count");
    if (real.empty()) throw ShapeError("report needs at least one hour");
    LoopReport rep;
    std::vector<double> all_real, all_pred;
    std::vector<std::optional<double>> rr, lo, me, hi;
    double mse_sum = 0.0, rmse_sum = 0.0;
    for (std::size_t h = 0; h < real.size(); ++h) {
        HourReport row{std::to_string(hours[h]), flow_errors(real[h], predicted[h]),
                       grouped_rrmse(real[h], predicted[h], grouping)};
        mse_sum += row.errors.mse;
        rmse_sum += row.errors.rmse;
        rr.push_back(row.errors.rrmse);
        lo.push_back(row.groups.low);
        me.push_back(row.groups.medium);
        hi.push_back(row.groups.high);
        all_real.insert(all_real.end(), real[h].begin(), real[h].end());
        all_pred.insert(all_pred.end(), predicted[h].begin(), predicted[h].end());
        rep.hours.push_back(std::move(row));
    }
    const double n = static_cast<double>(real.size());
    rep.mean_of_hours.label = "mean_of_hours";
    rep.mean_of_hours.errors = {mse_sum / n, rmse_sum / n, mean_of(rr)};
    rep.mean_of_hours.groups.low = mean_of(lo);
    rep.mean_of_hours.groups.medium = mean_of(me);
    rep.mean_of_hours.groups.high = mean_of(hi);

    // Pooled: every (hour, sensor) pair is one observation; the grouping repeats per hour.
    SensorGrouping tiled = grouping;
    tiled.level.clear();
    for (std::size_t h = 0; h < real.size(); ++h)
        tiled.level.insert(tiled.level.end(), grouping.level.begin(), grouping.level.end());
    rep.pooled.label = "pooled";
    rep.pooled.errors = flow_errors(all_real, all_pred);
    rep.pooled.groups = grouped_rrmse(all_real, all_pred, tiled);
    return rep;
}

void write_report_csv(std::ostream& out, const LoopReport& report) {
    auto opt = [&out](const std::optional<double>& v) -> std::ostream& {
        if (v)
            out << *v;
        else
            out << "NA";
        return out;
    };
    out << "hour,mse,rmse,rrmse,rrmse_lo,rrmse_me,rrmse_hi\n";
    out << std::fixed << std::setprecision(4);
    auto row = [&](const HourReport& r) {
        out << r.label << ',' << r.errors.mse << ',' << r.errors.rmse << ',';
        opt(r.errors.rrmse) << ',';
        opt(r.groups.low) << ',';
        opt(r.groups.medium) << ',';
        opt(r.groups.high) << '\n';
    };
    for (const auto& r : report.hours) row(r);
    row(report.mean_of_hours);
    row(report.pooled);
    out.unsetf(std::ios::fixed);
}

}  // namespace odnet
