// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include "odnet/dta.hpp"
#include "odnet/metrics.hpp"
#include "odnet/neural.hpp"
#include "odnet/odgen.hpp"
#include "odnet/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

using namespace odnet;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

int failures = 0;

void criterion(const char* id, const char* title, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (limit_s > 0 && secs >= limit_s) o.require(false, "runtime " + std::to_string(secs) + " s over limit");
    std::ostringstream line;
    line << (o.pass ? "PASS " : "FAIL ") << id << ' ' << title << " (" << secs << " s)";
    if (!o.detail.empty()) line << ": " << o.detail;
    std::puts(line.str().c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

void check_conservation(Outcome& o, const RoadNetwork& net, const OdMatrix& od, const AssignmentResult& res,
                        const std::string& name) {
    for (const Zone& z : net.zones) {
        double into = 0.0, out_of = 0.0, dem_in = 0.0, dem_out = 0.0;
        for (int lid : z.attach_links) {
            const std::size_t l = net.link_index(lid);
            if (net.links[l].to == z.node) into += res.link_flows[l];
            if (net.links[l].from == z.node) out_of += res.link_flows[l];
        }
        for (std::size_t k = 0; k < net.zone_count(); ++k) {
            dem_in += od.at(k, std::size_t(z.id));
            dem_out += od.at(std::size_t(z.id), k);
        }
        const double scale = std::max(1.0, std::max(dem_in, dem_out));
        o.require(std::abs(into - dem_in) <= 1e-12 * scale && std::abs(out_of - dem_out) <= 1e-12 * scale,
                  name + ": conservation violated at zone " + std::to_string(z.id));
    }
}

SyntheticDemandProfile days_profile(const RoadNetwork& net, int days) {
    SyntheticDemandProfile p = default_profile(net);
    p.days = days;
    return p;
}

Outcome constraint_suite() {
    Outcome o;
    const RoadNetwork net = make_demo_network();
    const ZeroMask mask = build_zero_mask(net.zones);
    const auto free = mask.free_entries();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> flow(0.0, 2000.0), coin(0.0, 1.0);

    auto check_signs = [&](const OdMatrix& od, const std::string& name) {
        for (std::size_t i = 0; i < od.zones; ++i)
            for (std::size_t j = 0; j < od.zones; ++j) {
                const double v = od.at(i, j);
                o.require(v >= 0.0, name + ": negative entry");
                if (mask.is_zero(i, j)) o.require(v == 0.0, name + ": structural zero violated");
            }
    };

    for (int k = 0; k < 100; ++k) {
        // Raw observations: arbitrary, generally inconsistent totals.
        FlowObservation obs;
        obs.hour = k;
        for (const Zone& z : net.zones) {
            if (z.cls == ZoneClass::parking)
                obs.parking[z.id] = {flow(rng), flow(rng), flow(rng), flow(rng)};
            else if (z.cls != ZoneClass::upper_curb && z.cls != ZoneClass::lower_curb)
                obs.boundary[z.id] = flow(rng);
        }
        const auto sys = assemble_constraints(net.zones, obs, mask);
        check_signs(solve_feasible_od(sys, mask, k), "raw #" + std::to_string(k));

        // Consistent observations from a known nonnegative OD.
        OdMatrix truth(net.zone_count(), k);
        for (auto [i, j] : free)
            if (coin(rng) < 0.7) truth.at(std::size_t(i), std::size_t(j)) = flow(rng) / 4.0;
        const auto consistent = assemble_constraints(net.zones, observe(net.zones, truth), mask);
        const OdMatrix d = solve_feasible_od(consistent, mask, k);
        check_signs(d, "consistent #" + std::to_string(k));
        const double f = objective(consistent.a, vectorize(d, mask), consistent.b);
        const double bb = std::inner_product(consistent.b.begin(), consistent.b.end(), consistent.b.begin(), 0.0);
        o.require(f <= 1e-6 * bb, "consistent #" + std::to_string(k) + ": objective " + fmt(f) + " > 1e-6 ||b||^2");
    }
    return o;
}

Outcome zero_mask() {
    Outcome o;
    const RoadNetwork net = make_lax_network();
    const ZeroMask mask = build_zero_mask(net.zones);
    o.require(net.zone_count() == 32, "zone count " + std::to_string(net.zone_count()));
    o.require(mask.free_count() == 161, "free entries " + std::to_string(mask.free_count()));
    o.detail = o.pass ? std::to_string(mask.free_count()) + " of " + std::to_string(32 * 32) + " free" : o.detail;
    return o;
}

Outcome logit() {
    Outcome o;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> cost(0.5, 5000.0), eta(0.0, 8.0), scale(0.01, 100.0);
    std::uniform_int_distribution<int> count(1, 8);
    for (int draw = 0; draw < 1000; ++draw) {
        std::vector<double> c(std::size_t(count(rng)));
        for (double& v : c) v = cost(rng);
        const double e = eta(rng);
        const auto p = logit_split(c, e);
        o.require(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9, "sum != 1");

        std::vector<double> rev(c.rbegin(), c.rend());
        const auto pr = logit_split(rev, e);
        for (std::size_t j = 0; j < p.size(); ++j)
            o.require(std::abs(pr[p.size() - 1 - j] - p[j]) <= 1e-12, "permutation symmetry");
        std::vector<double> tied = c;
        tied.assign(c.size(), c[0]);
        for (double v : logit_split(tied, e)) o.require(std::abs(v - 1.0 / double(c.size())) <= 1e-12, "equal costs");

        for (double v : logit_split(c, 0.0)) o.require(std::abs(v - 1.0 / double(c.size())) <= 1e-12, "eta=0");

        const double k = scale(rng);
        std::vector<double> scaled = c;
        for (double& v : scaled) v *= k;
        const auto ps = logit_split(scaled, e);
        for (std::size_t j = 0; j < p.size(); ++j)
            o.require(std::abs(ps[j] - p[j]) <= 1e-9 * std::max(1e-300, p[j]) + 1e-15, "scale invariance");
    }
    return o;
}

Outcome dta_oracle() {
    Outcome o;
    const oracles::TwoLinkCase c;
    {
        const RoadNetwork net = fixtures::two_parallel(c.t0_a, c.t0_b, c.capacity, 2000.0, 1000.0);
        OdMatrix od(2, 0);
        od.at(0, 1) = c.demand;
        DtaParams p;
        p.eta = c.eta;
        p.max_iterations = 2'000'000;
        p.conv_eps = 1e-12;
        const auto res = run_dta(net, od, p);
        const double err = std::abs(res.link_flows[0] / c.demand - oracles::two_link_share(c));
        o.require(err <= 1e-6, "share error " + fmt(err));
        o.detail = "share error " + fmt(err) + " after " + std::to_string(res.iterations) + " iterations";
        check_conservation(o, net, od, res, "two-link");
    }
    {
        const RoadNetwork net = fixtures::two_chains();
        OdMatrix od(4, 0);
        od.at(0, 1) = 300.0;
        od.at(2, 3) = 120.0;
        check_conservation(o, net, od, run_dta(net, od), "two-chains");
    }
    {
        const RoadNetwork net = fixtures::two_parallel(60, 60, 800);
        OdMatrix od(2, 0);
        od.at(0, 1) = 1000.0;
        check_conservation(o, net, od, run_dta(net, od), "symmetric pair");
    }
    for (const RoadNetwork& net : {make_demo_network(), make_lax_network()}) {
        const auto ods = generate_synthetic_ods(net, days_profile(net, 1));
        for (int h : {3, 8, 17}) {
            const OdMatrix& od = ods[std::size_t(h)];
            check_conservation(o, net, od, run_dta(net, od),
                               std::to_string(net.zone_count()) + "-zone hour " + std::to_string(h));
        }
    }
    return o;
}

Outcome gradient_check() {
    Outcome o;
    int models = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; models < 20 && seed < 1000; ++seed) {
        const auto p0 = gradcheck::random_problem(seed, 0.0, seed % 2 ? 0.0 : 0.2);
        const auto p1 = gradcheck::random_problem(seed, 0.02, seed % 2 ? 0.0 : 0.2);
        if (!gradcheck::smooth(p0, 1e-3) || !gradcheck::smooth(p1, 1e-3)) continue;
        for (const auto* p : {&p0, &p1}) {
            const double e = gradcheck::max_relative_error(*p);
            worst = std::max(worst, e);
            o.require(e <= 1e-4, "seed " + std::to_string(seed) + ": relative error " + fmt(e));
        }
        ++models;
    }
    o.require(models == 20, "only " + std::to_string(models) + " models checked");
    if (o.pass) o.detail = "20 models x 2 lambdas, worst relative error " + fmt(worst);
    return o;
}

// Four integers whose squares sum to n (Lagrange).
std::array<int, 4> four_squares(long n) {
    for (long a = long(std::sqrt(double(n))); a >= 0; --a)
        for (long b = a; b >= 0 && a * a + b * b <= n; --b)
            for (long c = b; c >= 0 && a * a + b * b + c * c <= n; --c) {
                const long rest = n - a * a - b * b - c * c;
                const long d = long(std::llround(std::sqrt(double(rest))));
                if (d * d == rest && d <= c) return {int(a), int(b), int(c), int(d)};
            }
    throw std::runtime_error("no decomposition");
}

Outcome metric_identities() {
    Outcome o;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 3000.0);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> q(20), p(20);
        for (double& v : q) v = u(rng);
        for (double& v : p) v = u(rng);
        const auto e = flow_errors(q, p);
        o.require(std::abs(e.rmse * e.rmse - e.mse) <= 1e-9 * e.mse, "RMSE^2 != MSE");
    }
    // Hourly rows with the given MSE over 50 sensors: integer sensor errors whose
    // squares sum to 50 * MSE, run through the metric code.
    const std::size_t sensors = 50;
    for (auto [mse, rmse] : {std::pair{7661.56, 87.53}, std::pair{7888.82, 88.82}}) {
        const long total = std::lround(mse * double(sensors));
        const auto e = four_squares(total);
        std::vector<double> real(sensors, 1000.0), pred = real;
        for (std::size_t k = 0; k < 4; ++k) pred[k] += e[k];
        const auto fe = flow_errors(real, pred);
        o.require(std::abs(fe.mse - mse) <= 1e-9 * mse, "constructed MSE " + fmt(fe.mse));
        o.require(std::round(fe.rmse * 100.0) / 100.0 == rmse, "RMSE " + fmt(fe.rmse) + " != " + fmt(rmse));
    }
    if (o.pass) o.detail = "sqrt(7661.56) -> 87.53, sqrt(7888.82) -> 88.82";
    return o;
}

std::vector<std::vector<double>> rows_of(const Matrix& m, std::span<const std::size_t> rows) {
    std::vector<std::vector<double>> out;
    for (std::size_t r : rows) out.emplace_back(m.row(r).begin(), m.row(r).end());
    return out;
}

std::vector<std::size_t> all_rows(const Dataset& d) {
    std::vector<std::size_t> r(d.size());
    std::iota(r.begin(), r.end(), 0);
    return r;
}

std::vector<int> hours_of(const Dataset& d, std::span<const std::size_t> rows) {
    std::vector<int> h;
    for (std::size_t r : rows) h.push_back(d.hours[r]);
    return h;
}

Outcome closed_loop_oracle() {
    Outcome o;
    const RoadNetwork net = make_demo_network();
    const Dataset d = build_dataset(net, generate_synthetic_observations(net, days_profile(net, 1)));
    const auto rows = all_rows(d);
    const auto res = closed_loop_eval(net, oracle_predictor(d), hours_of(d, rows), rows_of(d.inputs, rows), {});
    double worst = 0.0;
    for (const auto& h : res.report.hours) {
        if (!h.errors.rrmse) continue;
        worst = std::max(worst, *h.errors.rrmse);
        o.require(*h.errors.rrmse < 1.0, "hour " + h.label + ": rRMSE " + fmt(*h.errors.rrmse) + "%");
    }
    o.require(res.report.hours.size() == 24, "expected 24 hours");
    if (o.pass) o.detail = "24 hours, worst rRMSE_T " + fmt(worst) + "%";
    return o;
}

Outcome learning_signal() {
    Outcome o;
    const RoadNetwork net = make_lax_network();
    const auto obs = generate_synthetic_observations(net, days_profile(net, 30));
    const Dataset d = build_dataset(net, obs);
    o.require(d.size() == 720 && d.train.size() == 600 && d.test.size() == 120, "dataset shape");

    TrainConfig cfg;  // 80 hidden, dropout 0.2, lambda 0.02, lr 0.001, 50 epochs, batch 96
    cfg.seed = 42;
    cfg.exec = Exec::parallel;
    const auto trained = train(d, cfg);

    const auto nn = evaluate_nn(trained.model, d, d.test);
    const auto mean = mean_target(d, d.train);
    Matrix base(d.test.size(), d.targets.cols);
    Matrix truth(d.test.size(), d.targets.cols);
    for (std::size_t r = 0; r < d.test.size(); ++r)
        for (std::size_t c = 0; c < d.targets.cols; ++c) {
            base(r, c) = mean[c];
            truth(r, c) = d.targets(d.test[r], c);
        }
    const auto bl = prediction_metrics(truth, base);
    o.require(nn.rrmse && bl.rrmse && *nn.rrmse < *bl.rrmse,
              "NN rRMSE " + fmt(nn.rrmse.value_or(NAN)) + "% vs baseline " + fmt(bl.rrmse.value_or(NAN)) + "%");

    const auto hours = hours_of(d, d.test);
    const auto real = rows_of(d.inputs, d.test);
    const auto loop_nn = closed_loop_eval(net, nn_predictor(trained.model), hours, real, {});
    const auto loop_zero =
        closed_loop_eval(net, constant_predictor(std::vector<double>(d.targets.cols, 0.0)), hours, real, {});
    const auto loop_mean = closed_loop_eval(net, constant_predictor(mean), hours, real, {});
    const double t_nn = *loop_nn.report.mean_of_hours.errors.rrmse;
    const double t_zero = *loop_zero.report.mean_of_hours.errors.rrmse;
    const double t_mean = *loop_mean.report.mean_of_hours.errors.rrmse;
    const double p_nn = *loop_nn.report.pooled.errors.rrmse;
    const double p_zero = *loop_zero.report.pooled.errors.rrmse;
    o.require(t_nn < t_zero, "closed-loop rRMSE_T " + fmt(t_nn) + "% vs zero-OD " + fmt(t_zero) + "%");
    o.require(p_nn < p_zero, "pooled rRMSE_T " + fmt(p_nn) + "% vs zero-OD " + fmt(p_zero) + "%");
    if (o.pass)
        o.detail = "test rRMSE_NN " + fmt(*nn.rrmse) + "% < mean baseline " + fmt(*bl.rrmse) + "%; rRMSE_T " +
                   fmt(t_nn) + "% < zero-OD " + fmt(t_zero) + "% (constant-mean " + fmt(t_mean) + "%)";
    return o;
}

Outcome scenario_effect() {
    Outcome o;
    const RoadNetwork net = make_demo_network();
    const int entrance = net.zones[0].attach_links.front();
    const RoadNetwork closed = apply_scenario(net, {ScenarioKind::lane_closure, {entrance}, 0.5, 0.0});
    const auto ods = generate_synthetic_ods(net, days_profile(net, 1));
    const std::size_t l = net.link_index(entrance);
    for (int h : {8, 12, 17}) {
        const auto before = run_dta(net, ods[std::size_t(h)]);
        const auto after = run_dta(closed, ods[std::size_t(h)]);
        const std::string tag = "hour " + std::to_string(h) + ": ";
        o.require(before.link_flows[l] > 0.0, tag + "entrance link not loaded");
        o.require(after.link_travel_times[l] > before.link_travel_times[l],
                  tag + "link time " + fmt(before.link_travel_times[l]) + " -> " + fmt(after.link_travel_times[l]));
        o.require(after.mean_route_cost >= before.mean_route_cost,
                  tag + "mean cost " + fmt(before.mean_route_cost) + " -> " + fmt(after.mean_route_cost));
        if (h == 17 && o.pass)
            o.detail = "hour 17 link " + std::to_string(entrance) + " time " + fmt(before.link_travel_times[l]) +
                       " -> " + fmt(after.link_travel_times[l]) + ", mean cost " + fmt(before.mean_route_cost) +
                       " -> " + fmt(after.mean_route_cost);
    }
    return o;
}

}  // namespace

int main() {
    criterion("C1", "constraint suite", 10.0, constraint_suite);
    criterion("C2", "zero-mask cardinality", 0.0, zero_mask);
    criterion("C3", "logit properties", 0.0, logit);
    criterion("C4", "assignment oracle and conservation", 0.0, dta_oracle);
    criterion("C5", "gradient check", 30.0, gradient_check);
    criterion("C6", "metric identities", 0.0, metric_identities);
    criterion("C7", "closed-loop self-consistency", 120.0, closed_loop_oracle);
    criterion("C8", "learning signal", 1800.0, learning_signal);
    criterion("C9", "scenario effect", 0.0, scenario_effect);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
