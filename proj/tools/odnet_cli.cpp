#include "odnet/error.hpp"
#include "odnet/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

using namespace odnet;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    std::string config;

    PipelineConfig load() const {
        PipelineConfig cfg = config.empty() ? PipelineConfig{} : load_config(config);
        if (seed) cfg.train.seed = *seed;
        return cfg;
    }
    std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "Seed for every stochastic component");
    cmd->add_option("--config", c.config, "JSON file overriding defaults")->check(CLI::ExistingFile);
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw Error("write failed: " + path);
}

ZoneCounts parse_counts(const std::string& text) {
    ZoneCounts c{};
    std::stringstream ss(text);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ss, cell, ',')) {
        if (k >= c.size()) throw ParseError("--counts needs exactly 7 values");
        c[k++] = std::stoi(cell);
    }
    if (k != c.size()) throw ParseError("--counts needs exactly 7 values");
    return c;
}

std::vector<std::size_t> select_rows(const Dataset& data, const std::string& which) {
    if (which == "test") return data.test;
    if (which == "train") return data.train;
    if (which == "all") {
        std::vector<std::size_t> all(data.size());
        for (std::size_t r = 0; r < all.size(); ++r) all[r] = r;
        return all;
    }
    throw ParseError("--rows must be train, test or all");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Airport terminal OD estimation toolkit"};
    app.require_subcommand(1);

    // gen-network
    Common gn_c;
    std::string gn_out, gn_scale = "lax", gn_counts;
    auto* gn = app.add_subcommand("gen-network", "Write a synthetic terminal network (JSON)");
    add_common(gn, gn_c);
    gn->add_option("--out", gn_out, "Network file")->required();
    gn->add_option("--scale", gn_scale, "demo or lax")->check(CLI::IsMember({"demo", "lax"}));
    gn->add_option("--counts", gn_counts, "Zone counts Z1..Z7, comma separated");

    // gen-obs
    Common go_c;
    std::string go_net, go_out;
    std::optional<int> go_days;
    auto* go = app.add_subcommand("gen-obs", "Write synthetic hourly boundary observations (CSV)");
    add_common(go, go_c);
    go->add_option("--network", go_net)->required()->check(CLI::ExistingFile);
    go->add_option("--out", go_out)->required();
    go->add_option("--days", go_days)->check(CLI::PositiveNumber);

    // gen-od
    Common god_c;
    std::string god_net, god_obs, god_out;
    std::optional<int> god_hour;
    bool god_strict = false;
    auto* god = app.add_subcommand("gen-od", "Solve a feasible OD matrix for one observed hour (CSV)");
    add_common(god, god_c);
    god->add_option("--network", god_net)->required()->check(CLI::ExistingFile);
    god->add_option("--obs", god_obs)->required()->check(CLI::ExistingFile);
    god->add_option("--hour", god_hour, "Hour label (default: first in file)");
    god->add_option("--out", god_out)->required();
    god->add_flag("--require-feasible", god_strict, "Fail if the constraints cannot be met");

    // run-dta
    Common rd_c;
    std::string rd_net, rd_od, rd_out, rd_links;
    auto* rd = app.add_subcommand("run-dta", "Assign an OD matrix and write sensor flows (CSV)");
    add_common(rd, rd_c);
    rd->add_option("--network", rd_net)->required()->check(CLI::ExistingFile);
    rd->add_option("--od", rd_od)->required()->check(CLI::ExistingFile);
    rd->add_option("--out", rd_out)->required();
    rd->add_option("--links-out", rd_links, "Optional per-link flow/time CSV");

    // build-dataset
    Common bd_c;
    std::string bd_net, bd_obs, bd_out;
    bool bd_serial = false, bd_strict = false;
    auto* bd = app.add_subcommand("build-dataset", "Solve and assign every observed hour (CSV dataset)");
    add_common(bd, bd_c);
    bd->add_option("--network", bd_net)->required()->check(CLI::ExistingFile);
    bd->add_option("--obs", bd_obs)->required()->check(CLI::ExistingFile);
    bd->add_option("--out", bd_out)->required();
    bd->add_flag("--serial", bd_serial, "Process hours on one thread");
    bd->add_flag("--require-feasible", bd_strict);

    // train
    Common tr_c;
    std::string tr_data, tr_out, tr_trace;
    auto* tr = app.add_subcommand("train", "Train the flow-to-OD network (JSON checkpoint)");
    add_common(tr, tr_c);
    tr->add_option("--dataset", tr_data)->required()->check(CLI::ExistingFile);
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--trace", tr_trace, "Optional per-epoch loss CSV");

    // eval-nn
    Common en_c;
    std::string en_data, en_model, en_rows = "test";
    auto* en = app.add_subcommand("eval-nn", "OD prediction error against the constant-mean baseline");
    add_common(en, en_c);
    en->add_option("--dataset", en_data)->required()->check(CLI::ExistingFile);
    en->add_option("--model", en_model)->required()->check(CLI::ExistingFile);
    en->add_option("--rows", en_rows, "train, test or all");

    // eval-loop
    Common el_c;
    std::string el_net, el_data, el_model, el_out, el_rows = "test", el_predictor = "nn";
    auto* el = app.add_subcommand("eval-loop", "Closed loop: flows -> OD -> assignment -> flows (CSV report)");
    add_common(el, el_c);
    el->add_option("--network", el_net)->required()->check(CLI::ExistingFile);
    el->add_option("--dataset", el_data)->required()->check(CLI::ExistingFile);
    el->add_option("--model", el_model, "Checkpoint (predictor nn)")->check(CLI::ExistingFile);
    el->add_option("--predictor", el_predictor, "nn, mean, zero or oracle")
        ->check(CLI::IsMember({"nn", "mean", "zero", "oracle"}));
    el->add_option("--rows", el_rows, "train, test or all");
    el->add_option("--out", el_out)->required();

    // scenario
    Common sc_c;
    std::string sc_net, sc_out, sc_kind = "lane_closure", sc_od;
    std::vector<int> sc_links;
    double sc_factor = 1.0, sc_cost = 0.0;
    auto* sc = app.add_subcommand("scenario", "Apply a lane closure or curbside restriction");
    add_common(sc, sc_c);
    sc->add_option("--network", sc_net)->required()->check(CLI::ExistingFile);
    sc->add_option("--kind", sc_kind)->check(CLI::IsMember({"lane_closure", "curbside_restriction"}));
    sc->add_option("--links", sc_links, "Target link ids")->required()->delimiter(',');
    sc->add_option("--capacity-factor", sc_factor);
    sc->add_option("--extra-cost", sc_cost, "Added financial cost");
    sc->add_option("--out", sc_out, "Modified network file")->required();
    sc->add_option("--od", sc_od, "Compare assignments before and after for this OD")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gn) {
            gn_c.load();
            RoadNetwork net = !gn_counts.empty()    ? generate_terminal_network(parse_counts(gn_counts))
                              : gn_scale == "demo" ? make_demo_network()
                                                   : make_lax_network();
            if (const auto bad = unreachable_pairs(net); !bad.empty())
                throw Error("generated network leaves " + std::to_string(bad.size()) + " OD pairs unroutable");
            save_network(net, gn_out);
        } else if (*go) {
            const PipelineConfig cfg = go_c.load();
            const RoadNetwork net = load_network(go_net);
            ProfileOverrides o = cfg.profile;
            if (go_days) o.days = *go_days;
            const auto obs = generate_synthetic_observations(net, make_profile(net, o, go_c.seed_or(42)));
            auto out = open_out(go_out);
            write_observations_csv(out, obs);
            finish(out, go_out);
        } else if (*god) {
            const PipelineConfig cfg = god_c.load();
            const RoadNetwork net = load_network(god_net);
            auto in = open_in(god_obs);
            const auto obs = read_observations_csv(in);
            if (obs.empty()) throw Error("observation file is empty");
            const FlowObservation* pick = &obs.front();
            if (god_hour) {
                pick = nullptr;
                for (const auto& o : obs)
                    if (o.hour == *god_hour) pick = &o;
                if (!pick) throw Error("hour " + std::to_string(*god_hour) + " not in " + god_obs);
            }
            const ZeroMask mask = build_zero_mask(net.zones);
            const auto sys = assemble_constraints(net.zones, *pick, mask);
            const OdMatrix od = solve_feasible_od(sys, mask, pick->hour, cfg.nnls, god_strict);
            auto out = open_out(god_out);
            write_od_csv(out, od, mask);
            finish(out, god_out);
        } else if (*rd) {
            const PipelineConfig cfg = rd_c.load();
            const RoadNetwork net = load_network(rd_net);
            const ZeroMask mask = build_zero_mask(net.zones);
            auto in = open_in(rd_od);
            const OdMatrix od = read_od_csv(in, mask);
            DtaParams dta = cfg.dta;
            dta.exec = Exec::parallel;
            const AssignmentResult res = run_dta(net, od, dta);
            auto out = open_out(rd_out);
            write_sensor_flows_csv(out, res, dta);
            finish(out, rd_out);
            if (!rd_links.empty()) {
                auto lo = open_out(rd_links);
                lo << "link_id,flow,travel_time\n";
                for (std::size_t k = 0; k < net.links.size(); ++k)
                    lo << net.links[k].id << ',' << res.link_flows[k] << ',' << res.link_travel_times[k] << '\n';
                finish(lo, rd_links);
            }
            if (!res.converged)
                std::cerr << "warning: assignment stopped at the iteration limit (" << res.iterations << ")\n";
        } else if (*bd) {
            const PipelineConfig cfg = bd_c.load();
            const RoadNetwork net = load_network(bd_net);
            auto in = open_in(bd_obs);
            const auto obs = read_observations_csv(in);
            DatasetOptions opts{cfg.dta, cfg.nnls, bd_strict, bd_serial ? Exec::serial : Exec::parallel};
            const Dataset data = build_dataset(net, obs, opts);
            auto out = open_out(bd_out);
            write_dataset_csv(out, data);
            finish(out, bd_out);
        } else if (*tr) {
            const PipelineConfig cfg = tr_c.load();
            auto in = open_in(tr_data);
            const Dataset data = read_dataset_csv(in);
            const TrainResult res = train(data, cfg.train);
            save_model(res.model, tr_out);
            if (!tr_trace.empty()) {
                auto t = open_out(tr_trace);
                t << "epoch,loss\n" << std::setprecision(10);
                for (std::size_t e = 0; e < res.loss_trace.size(); ++e) t << e + 1 << ',' << res.loss_trace[e] << '\n';
                finish(t, tr_trace);
            }
        } else if (*en) {
            en_c.load();
            auto in = open_in(en_data);
            const Dataset data = read_dataset_csv(in);
            const NnModel model = load_model(en_model, data.targets.cols);
            const auto rows = select_rows(data, en_rows);
            const NnMetrics nn = evaluate_nn(model, data, rows);
            const auto mean = mean_target(data, data.train);
            Matrix tgt(rows.size(), data.targets.cols), base(rows.size(), data.targets.cols);
            for (std::size_t k = 0; k < rows.size(); ++k)
                for (std::size_t c = 0; c < mean.size(); ++c) {
                    tgt(k, c) = data.targets(rows[k], c);
                    base(k, c) = mean[c];
                }
            const NnMetrics bl = prediction_metrics(tgt, base);
            auto show = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("NA"); };
            std::cout << "model,mse,rmse,rrmse\n";
            std::cout << "nn," << nn.mse << ',' << nn.rmse << ',' << show(nn.rrmse) << '\n';
            std::cout << "mean_baseline," << bl.mse << ',' << bl.rmse << ',' << show(bl.rrmse) << '\n';
        } else if (*el) {
            const PipelineConfig cfg = el_c.load();
            const RoadNetwork net = load_network(el_net);
            auto in = open_in(el_data);
            const Dataset data = read_dataset_csv(in);
            if (data.inputs.cols != net.sensor_count()) throw ShapeError("dataset sensors do not match network");
            OdPredictor predictor;
            if (el_predictor == "nn") {
                if (el_model.empty()) throw Error("--predictor nn needs --model");
                predictor = nn_predictor(load_model(el_model, data.targets.cols));
            } else if (el_predictor == "mean") {
                predictor = constant_predictor(mean_target(data, data.train));
            } else if (el_predictor == "zero") {
                predictor = constant_predictor(std::vector<double>(data.targets.cols, 0.0));
            } else {
                predictor = oracle_predictor(data);
            }
            const auto rows = select_rows(data, el_rows);
            std::vector<int> hours;
            std::vector<std::vector<double>> real;
            for (std::size_t r : rows) {
                hours.push_back(data.hours[r]);
                const auto x = data.inputs.row(r);
                real.emplace_back(x.begin(), x.end());
            }
            const ClosedLoopResult res = closed_loop_eval(net, predictor, hours, real, cfg.dta);
            auto out = open_out(el_out);
            write_report_csv(out, res.report);
            finish(out, el_out);
            for (const auto& h : res.report.hours)
                for (const auto& w : h.groups.warnings) std::cerr << "hour " << h.label << ": " << w << '\n';
        } else if (*sc) {
            const PipelineConfig cfg = sc_c.load();
            const RoadNetwork net = load_network(sc_net);
            ScenarioTransform t;
            t.kind = sc_kind == "lane_closure" ? ScenarioKind::lane_closure : ScenarioKind::curbside_restriction;
            t.links = sc_links;
            t.capacity_factor = sc_factor;
            t.extra_dwell_cost = sc_cost;
            const RoadNetwork after = apply_scenario(net, t);
            save_network(after, sc_out);
            if (!sc_od.empty()) {
                auto in = open_in(sc_od);
                const OdMatrix od = read_od_csv(in, build_zero_mask(net.zones));
                const auto r0 = run_dta(net, od, cfg.dta);
                const auto r1 = run_dta(after, od, cfg.dta);
                std::cout << std::setprecision(10) << "case,mean_route_cost";
                for (int lid : sc_links) std::cout << ",time_link" << lid;
                std::cout << '\n';
                auto row = [&](const char* name, const AssignmentResult& r) {
                    std::cout << name << ',' << r.mean_route_cost;
                    for (int lid : sc_links) std::cout << ',' << r.link_travel_times[*net.find_link(lid)];
                    std::cout << '\n';
                };
                row("before", r0);
                row("after", r1);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "odnet " << app.get_subcommands().front()->get_name() << ": error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
