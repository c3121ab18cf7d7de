#include "odnet/pipeline.hpp"

#include "odnet/csv.hpp"
#include "odnet/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace odnet {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Network generator

namespace {

constexpr double kCityspeed = 13.9;  // m/s
constexpr double kStopSpeed = 5.0;
constexpr double kBypassSpeed = 8.0;

class NetworkBuilder {
public:
    int node(NodeKind kind) {
        net.nodes.push_back({next_node_, kind});
        return next_node_++;
    }
    int link(int from, int to, double length, double capacity, double speed) {
        Link l;
        l.id = next_link_++;
        l.from = from;
        l.to = to;
        l.length = length;
        l.capacity = capacity;
        l.free_flow_time = length / speed;
        l.travel_time = l.free_flow_time;
        net.links.push_back(l);
        return l.id;
    }

    RoadNetwork net;

private:
    int next_node_ = 0;
    int next_link_ = 0;
};

struct ParkingAttach {
    int in_upper = -1, out_upper = -1, in_lower = -1, out_lower = -1;
};

}  // namespace

RoadNetwork generate_terminal_network(const ZoneCounts& counts) {
    for (int c : counts)
        if (c < 0) throw DomainError("zone counts must be >= 0");
    NetworkBuilder b;

    // Zones in class order; every zone gets its own centroid.
    for (int cls = 0; cls < kZoneClassCount; ++cls)
        for (int k = 0; k < counts[std::size_t(cls)]; ++k) {
            Zone z;
            z.id = static_cast<int>(b.net.zones.size());
            z.cls = static_cast<ZoneClass>(cls);
            z.node = b.node(NodeKind::zone_connector);
            b.net.zones.push_back(z);
        }
    auto zones_of = [&](ZoneClass c) {
        std::vector<int> out;
        for (const auto& z : b.net.zones)
            if (z.cls == c) out.push_back(z.id);
        return out;
    };
    const auto parkings = zones_of(ZoneClass::parking);
    std::map<int, ParkingAttach> parking_links;
    int corridor_sensor_link = -1;

    auto build_level = [&](bool upper) {
        const auto entrances = zones_of(upper ? ZoneClass::upper_entrance : ZoneClass::lower_entrance);
        const auto exits = zones_of(upper ? ZoneClass::upper_exit : ZoneClass::lower_exit);
        const auto curbs = zones_of(upper ? ZoneClass::upper_curb : ZoneClass::lower_curb);

        // Stops alternate curb / parking along the loop.
        std::vector<int> stops;
        for (std::size_t k = 0; k < std::max(curbs.size(), parkings.size()); ++k) {
            if (k < curbs.size()) stops.push_back(curbs[k]);
            if (k < parkings.size()) stops.push_back(parkings[k]);
        }
        const std::size_t m = stops.size();
        std::vector<int> junction(m + 1);
        for (auto& j : junction) j = b.node(NodeKind::junction);

        for (std::size_t k = 0; k < m; ++k) {
            const int main = b.link(junction[k], junction[k + 1], 150.0, 3600.0, kCityspeed);
            if (upper && k == 0) corridor_sensor_link = main;
        }
        // Shorter but slower service road skipping one stop.
        for (std::size_t k = 0; k + 2 <= m; k += 2) b.link(junction[k], junction[k + 2], 270.0, 1200.0, kBypassSpeed);

        for (int e : entrances) {
            Zone& z = b.net.zones[std::size_t(e)];
            z.attach_links.push_back(b.link(z.node, junction.front(), 200.0, 1800.0, kCityspeed));
        }
        for (int x : exits) {
            Zone& z = b.net.zones[std::size_t(x)];
            z.attach_links.push_back(b.link(junction.back(), z.node, 200.0, 1800.0, kCityspeed));
        }
        for (std::size_t k = 0; k < m; ++k) {
            Zone& z = b.net.zones[std::size_t(stops[k])];
            const int in = b.link(junction[k], z.node, 50.0, 900.0, kStopSpeed);
            const int out = b.link(z.node, junction[k + 1], 50.0, 900.0, kStopSpeed);
            z.attach_links.push_back(in);
            z.attach_links.push_back(out);
            if (z.cls == ZoneClass::parking) {
                auto& p = parking_links[z.id];
                (upper ? p.in_upper : p.in_lower) = in;
                (upper ? p.out_upper : p.out_lower) = out;
            }
        }
    };
    build_level(true);
    build_level(false);

    int sid = 0;
    for (const auto& z : b.net.zones)
        if (z.cls == ZoneClass::upper_entrance || z.cls == ZoneClass::upper_exit ||
            z.cls == ZoneClass::lower_entrance || z.cls == ZoneClass::lower_exit)
            b.net.sensors.push_back({sid++, z.attach_links.front()});
    for (int p : parkings) {
        const auto& a = parking_links[p];
        for (int l : {a.in_upper, a.in_lower, a.out_upper, a.out_lower}) b.net.sensors.push_back({sid++, l});
    }
    if (corridor_sensor_link >= 0) b.net.sensors.push_back({sid++, corridor_sensor_link});

    b.net.cost_weights = {1.0, 0.0, 1.0};
    b.net.validate();
    return b.net;
}

RoadNetwork make_demo_network() { return generate_terminal_network(kDemoZoneCounts); }
RoadNetwork make_lax_network() { return generate_terminal_network(kLaxZoneCounts); }

std::vector<std::pair<int, int>> unreachable_pairs(const RoadNetwork& net) {
    const ZeroMask mask = build_zero_mask(net.zones);
    const auto costs = link_costs(net, net.cost_weights);
    std::vector<std::pair<int, int>> out;
    for (auto [i, j] : mask.free_entries())
        if (!shortest_path(net, costs, i, j)) out.emplace_back(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic demand

void SyntheticDemandProfile::validate() const {
    for (double m : diurnal)
        if (!std::isfinite(m) || m < 0.0) throw DomainError("diurnal multipliers must be finite and >= 0");
    for (auto [z, q] : base_flows)
        if (!std::isfinite(q) || q < 0.0)
            throw DomainError("base flow of zone " + std::to_string(z) + " must be finite and >= 0");
    if (days < 1) throw DomainError("profile needs at least one day");
    if (!(noise_sigma >= 0.0) || !(day_sigma >= 0.0)) throw DomainError("noise levels must be >= 0");
}

namespace {

double default_base(ZoneClass c) {
    switch (c) {
        case ZoneClass::upper_entrance:
        case ZoneClass::lower_entrance: return 800.0;
        case ZoneClass::parking: return 500.0;
        case ZoneClass::upper_curb:
        case ZoneClass::lower_curb: return 150.0;
        default: return 0.0;
    }
}

constexpr std::array<double, 24> kAirportDiurnal = {0.35, 0.22, 0.15, 0.15, 0.30, 0.60, 0.95, 1.20,
                                                    1.25, 1.15, 1.05, 1.00, 1.00, 1.05, 1.10, 1.15,
                                                    1.20, 1.30, 1.30, 1.20, 1.05, 0.90, 0.70, 0.50};

}  // namespace

SyntheticDemandProfile default_profile(const RoadNetwork& net) {
    SyntheticDemandProfile p;
    p.diurnal = kAirportDiurnal;
    for (const auto& z : net.zones) {
        const double q = default_base(z.cls);
        if (q > 0.0) p.base_flows[z.id] = q;
    }
    return p;
}

SyntheticDemandProfile make_profile(const RoadNetwork& net, const ProfileOverrides& o, std::uint64_t seed) {
    SyntheticDemandProfile p = default_profile(net);
    for (const auto& z : net.zones) {
        auto it = o.base_by_class.find(z.cls);
        if (it != o.base_by_class.end()) p.base_flows[z.id] = it->second;
    }
    if (o.diurnal) p.diurnal = *o.diurnal;
    if (o.days) p.days = *o.days;
    if (o.noise_sigma) p.noise_sigma = *o.noise_sigma;
    if (o.day_sigma) p.day_sigma = *o.day_sigma;
    p.noise_seed = seed;
    p.validate();
    return p;
}

std::vector<OdMatrix> generate_synthetic_ods(const RoadNetwork& net, const SyntheticDemandProfile& profile) {
    profile.validate();
    const ZeroMask mask = build_zero_mask(net.zones);
    const auto entries = mask.free_entries();
    std::mt19937_64 rng(profile.noise_seed);

    // Fixed destination preferences per origin, normalized to sum to one.
    std::vector<double> weight(entries.size());
    std::uniform_real_distribution<double> pref(0.5, 1.5);
    std::map<int, double> origin_total;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        weight[k] = pref(rng);
        origin_total[entries[k].first] += weight[k];
    }
    for (std::size_t k = 0; k < entries.size(); ++k) weight[k] /= origin_total[entries[k].first];

    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<OdMatrix> out;
    out.reserve(std::size_t(profile.days) * 24);
    for (int day = 0; day < profile.days; ++day) {
        const double day_factor = std::exp(profile.day_sigma * normal(rng) - 0.5 * profile.day_sigma * profile.day_sigma);
        for (int h = 0; h < 24; ++h) {
            OdMatrix od(net.zone_count(), day * 24 + h);
            for (std::size_t k = 0; k < entries.size(); ++k) {
                const double noise =
                    std::exp(profile.noise_sigma * normal(rng) - 0.5 * profile.noise_sigma * profile.noise_sigma);
                auto base = profile.base_flows.find(entries[k].first);
                const double q = base == profile.base_flows.end() ? 0.0 : base->second;
                const double d = q * profile.diurnal[std::size_t(h)] * day_factor * weight[k] * noise;
                if (!std::isfinite(d) || d < 0.0) throw DomainError("profile produced an invalid demand");
                od.at(entries[k].first, entries[k].second) = d;
            }
            out.push_back(std::move(od));
        }
    }
    return out;
}

std::vector<FlowObservation> generate_synthetic_observations(const RoadNetwork& net,
                                                             const SyntheticDemandProfile& profile) {
    std::vector<FlowObservation> out;
    for (const auto& od : generate_synthetic_ods(net, profile)) out.push_back(observe(net.zones, od));
    return out;
}

// ---------------------------------------------------------------------------
// Dataset

void chronological_split(Dataset& data) {
    const std::size_t k = data.size();
    const std::size_t n_train = k * 5 / 6;
    data.train.clear();
    data.test.clear();
    for (std::size_t r = 0; r < k; ++r) (r < n_train ? data.train : data.test).push_back(r);
}

namespace {

template <typename Fn>
void for_each_hour(std::size_t n, Exec exec, std::span<const int> labels, Fn&& fn) {
    std::vector<std::exception_ptr> failures(n);
    auto guarded = [&](std::size_t k) {
        try {
            fn(k);
        } catch (...) {
            failures[k] = std::current_exception();
        }
    };
    if (exec == Exec::parallel) {
        const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
        for (long long k = 0; k < count; ++k) guarded(std::size_t(k));
    } else {
        for (std::size_t k = 0; k < n; ++k) guarded(k);
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!failures[k]) continue;
        try {
            std::rethrow_exception(failures[k]);
        } catch (const std::exception& e) {
            throw Error("hour " + std::to_string(labels[k]) + ": " + e.what());
        }
    }
}

}  // namespace

Dataset build_dataset(const RoadNetwork& net, std::span<const FlowObservation> observations,
                      const DatasetOptions& opts) {
    if (observations.empty()) throw Error("no observations to build a dataset from");
    const ZeroMask mask = build_zero_mask(net.zones);
    const std::size_t k = observations.size();

    Dataset data;
    data.inputs = Matrix(k, net.sensor_count());
    data.targets = Matrix(k, mask.free_count());
    for (const auto& o : observations) data.hours.push_back(o.hour);

    for_each_hour(k, opts.exec, data.hours, [&](std::size_t r) {
        const FlowObservation& obs = observations[r];
        const ConstraintSystem sys = assemble_constraints(net.zones, obs, mask);
        const OdMatrix od = solve_feasible_od(sys, mask, obs.hour, opts.nnls, opts.require_feasible);
        DtaParams dta = opts.dta;
        dta.exec = Exec::serial;
        const AssignmentResult res = run_dta(net, od, dta);
        std::copy(res.sensor_flows.begin(), res.sensor_flows.end(), data.inputs.row(r).begin());
        const auto vec = vectorize(od, mask);
        std::copy(vec.begin(), vec.end(), data.targets.row(r).begin());
    });
    chronological_split(data);
    return data;
}

// ---------------------------------------------------------------------------
// Predictors and closed loop

OdPredictor nn_predictor(const NnModel& model) {
    return [model](std::span<const double> flows) { return predict(model, flows); };
}

OdPredictor constant_predictor(std::vector<double> od_vector) {
    return [v = std::move(od_vector)](std::span<const double>) { return v; };
}

OdPredictor oracle_predictor(const Dataset& data) {
    std::map<std::vector<double>, std::vector<double>> table;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto x = data.inputs.row(r);
        const auto y = data.targets.row(r);
        table.emplace(std::vector<double>(x.begin(), x.end()), std::vector<double>(y.begin(), y.end()));
    }
    return [table = std::move(table)](std::span<const double> flows) {
        auto it = table.find(std::vector<double>(flows.begin(), flows.end()));
        if (it == table.end()) throw Error("oracle predictor: flows not in the dataset");
        return it->second;
    };
}

std::vector<double> mean_target(const Dataset& data, std::span<const std::size_t> rows) {
    if (rows.empty()) throw Error("mean of an empty sample set");
    std::vector<double> mean(data.targets.cols, 0.0);
    for (std::size_t r : rows)
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += data.targets(r, c);
    for (double& v : mean) v /= double(rows.size());
    return mean;
}

ClosedLoopResult closed_loop_eval(const RoadNetwork& net, const OdPredictor& predictor, std::span<const int> hours,
                                  const std::vector<std::vector<double>>& real_flows, const DtaParams& dta,
                                  Exec exec) {
    if (hours.size() != real_flows.size()) throw ShapeError("hour labels do not match flow vectors");
    if (real_flows.empty()) throw Error("closed-loop evaluation needs at least one hour");
    const ZeroMask mask = build_zero_mask(net.zones);
    const std::size_t s_count = net.sensor_count();

    // Predictors may not be thread-safe; run them up front.
    std::vector<std::vector<double>> od_vectors;
    for (std::size_t h = 0; h < real_flows.size(); ++h) {
        if (real_flows[h].size() != s_count) throw ShapeError("flow vector does not match sensor count");
        auto v = predictor(real_flows[h]);
        for (double d : v)
            if (!(d >= 0.0)) throw DomainError("predicted OD entry is negative or non-finite");
        od_vectors.push_back(std::move(v));
    }

    ClosedLoopResult out;
    out.predicted.assign(real_flows.size(), {});
    DtaParams inner = dta;
    inner.exec = Exec::serial;
    for_each_hour(real_flows.size(), exec, hours, [&](std::size_t h) {
        const OdMatrix od = devectorize(od_vectors[h], mask, hours[h]);
        out.predicted[h] = run_dta(net, od, inner).sensor_flows;
    });

    std::vector<std::vector<double>> daily(s_count);
    for (const auto& f : real_flows)
        for (std::size_t s = 0; s < s_count; ++s) daily[s].push_back(f[s]);
    out.grouping = group_sensors(daily);
    out.report = make_loop_report(hours, real_flows, out.predicted, out.grouping);
    return out;
}

// ---------------------------------------------------------------------------
// Scenarios

RoadNetwork apply_scenario(const RoadNetwork& net, const ScenarioTransform& t) {
    if (!(t.capacity_factor > 0.0 && t.capacity_factor <= 1.0))
        throw DomainError("capacity_factor must be in (0, 1]");
    if (!(t.extra_dwell_cost >= 0.0) || !std::isfinite(t.extra_dwell_cost))
        throw DomainError("extra_dwell_cost must be finite and >= 0");
    RoadNetwork out = net;
    for (int lid : t.links) {
        const auto idx = out.find_link(lid);
        if (!idx) throw Error("scenario targets unknown link " + std::to_string(lid));
        Link& l = out.links[*idx];
        l.capacity *= t.capacity_factor;
        l.financial_cost += t.extra_dwell_cost;
    }
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Dataset file

void write_dataset_csv(std::ostream& out, const Dataset& data) {
    out << "# samples=" << data.size() << " sensors=" << data.inputs.cols << " outputs=" << data.targets.cols
        << " train=" << data.train.size() << '\n';
    out << "hour,split";
    for (std::size_t s = 0; s < data.inputs.cols; ++s) out << ",x" << s;
    for (std::size_t m = 0; m < data.targets.cols; ++m) out << ",y" << m;
    out << '\n';
    std::vector<bool> is_train(data.size(), false);
    for (std::size_t r : data.train) is_train[r] = true;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t r = 0; r < data.size(); ++r) {
        out << data.hours[r] << ',' << (is_train[r] ? "train" : "test");
        for (double v : data.inputs.row(r)) out << ',' << v;
        for (double v : data.targets.row(r)) out << ',' << v;
        out << '\n';
    }
}

Dataset read_dataset_csv(std::istream& in) {
    csv::Reader reader(in);
    const auto& meta = reader.header_values();
    if (!meta.contains("sensors") || !meta.contains("outputs"))
        throw ParseError("dataset: header must declare sensors= and outputs=");
    const std::size_t s = std::stoul(meta.at("sensors"));
    const std::size_t m = std::stoul(meta.at("outputs"));
    reader.expect_columns({"hour", "split"});
    if (reader.columns().size() != 2 + s + m) throw ParseError("dataset: column count does not match header");

    Dataset data;
    std::vector<double> xs, ys;
    while (auto row = reader.next()) {
        if (row->size() != 2 + s + m) throw ParseError(row->context() + ": wrong column count");
        const std::size_t r = data.hours.size();
        data.hours.push_back(row->integer(0));
        const std::string& split = row->text(1);
        if (split == "train")
            data.train.push_back(r);
        else if (split == "test")
            data.test.push_back(r);
        else
            throw ParseError(row->context() + ": split must be train or test");
        for (std::size_t k = 0; k < s; ++k) xs.push_back(row->number(2 + k));
        for (std::size_t k = 0; k < m; ++k) ys.push_back(row->number(2 + s + k));
    }
    data.inputs = Matrix(data.hours.size(), s);
    data.inputs.data = std::move(xs);
    data.targets = Matrix(data.hours.size(), m);
    data.targets.data = std::move(ys);
    data.validate();
    return data;
}

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& section) {
    if (!obj.is_object()) throw ParseError("config: section '" + section + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : keys) known = known || it.key() == k;
        if (!known) throw ParseError("config: unknown key '" + section + "." + it.key() + "'");
    }
}

template <typename T>
void maybe(const json& obj, const char* key, T& target) {
    if (obj.contains(key)) target = obj.at(key).get<T>();
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    try {
        const json doc = json::parse(text);
        reject_unknown(doc, {"dta", "nnls", "train", "profile"}, "<root>");
        if (doc.contains("dta")) {
            const auto& d = doc.at("dta");
            reject_unknown(d, {"eta", "max_iterations", "conv_eps", "init_speed", "cost_floor", "cost_weights"}, "dta");
            maybe(d, "eta", cfg.dta.eta);
            maybe(d, "max_iterations", cfg.dta.max_iterations);
            maybe(d, "conv_eps", cfg.dta.conv_eps);
            maybe(d, "init_speed", cfg.dta.init_speed);
            maybe(d, "cost_floor", cfg.dta.cost_floor);
            if (d.contains("cost_weights")) {
                const auto& w = d.at("cost_weights");
                reject_unknown(w, {"alpha", "beta", "gamma"}, "dta.cost_weights");
                CostWeights cw;
                maybe(w, "alpha", cw.alpha);
                maybe(w, "beta", cw.beta);
                maybe(w, "gamma", cw.gamma);
                cfg.dta.weights = cw;
            }
            cfg.dta.validate();
        }
        if (doc.contains("nnls")) {
            const auto& n = doc.at("nnls");
            reject_unknown(n, {"rel_tol", "max_iterations", "power_iterations"}, "nnls");
            maybe(n, "rel_tol", cfg.nnls.rel_tol);
            maybe(n, "max_iterations", cfg.nnls.max_iterations);
            maybe(n, "power_iterations", cfg.nnls.power_iterations);
        }
        if (doc.contains("train")) {
            const auto& t = doc.at("train");
            reject_unknown(t,
                           {"hidden", "dropout", "l1", "learning_rate", "epochs", "batch_size", "beta1", "beta2",
                            "adam_eps", "normalize_inputs", "init_output_bias"},
                           "train");
            maybe(t, "hidden", cfg.train.hidden);
            maybe(t, "dropout", cfg.train.dropout);
            maybe(t, "l1", cfg.train.l1);
            maybe(t, "learning_rate", cfg.train.learning_rate);
            maybe(t, "epochs", cfg.train.epochs);
            maybe(t, "batch_size", cfg.train.batch_size);
            maybe(t, "beta1", cfg.train.beta1);
            maybe(t, "beta2", cfg.train.beta2);
            maybe(t, "adam_eps", cfg.train.adam_eps);
            maybe(t, "normalize_inputs", cfg.train.normalize_inputs);
            maybe(t, "init_output_bias", cfg.train.init_output_bias);
            cfg.train.validate();
        }
        if (doc.contains("profile")) {
            const auto& p = doc.at("profile");
            reject_unknown(p, {"base_flows", "diurnal", "days", "noise_sigma", "day_sigma"}, "profile");
            if (p.contains("base_flows")) {
                for (auto it = p.at("base_flows").begin(); it != p.at("base_flows").end(); ++it) {
                    const auto cls = parse_zone_class(it.key());
                    if (!cls) throw ParseError("config: profile.base_flows key must be Z1..Z7, got " + it.key());
                    cfg.profile.base_by_class[*cls] = it.value().get<double>();
                }
            }
            if (p.contains("diurnal")) {
                const auto v = p.at("diurnal").get<std::vector<double>>();
                if (v.size() != 24) throw ParseError("config: profile.diurnal needs 24 values");
                std::array<double, 24> a{};
                std::copy(v.begin(), v.end(), a.begin());
                cfg.profile.diurnal = a;
            }
            if (p.contains("days")) cfg.profile.days = p.at("days").get<int>();
            if (p.contains("noise_sigma")) cfg.profile.noise_sigma = p.at("noise_sigma").get<double>();
            if (p.contains("day_sigma")) cfg.profile.day_sigma = p.at("day_sigma").get<double>();
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace odnet
