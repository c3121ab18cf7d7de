#include "odnet/error.hpp"
#include "odnet/odgen.hpp"
#include "odnet/pipeline.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace odnet;

namespace {

// Feasibility rules restated from the zone roles, independent of the library.
bool rule_zero(ZoneClass from, ZoneClass to) {
    using Z = ZoneClass;
    const bool from_exit = from == Z::upper_exit || from == Z::lower_exit;
    const bool to_entrance = to == Z::upper_entrance || to == Z::lower_entrance;
    const bool from_entrance = from == Z::upper_entrance || from == Z::lower_entrance;
    const bool to_exit = to == Z::upper_exit || to == Z::lower_exit;
    auto stop = [](Z c) { return c == Z::upper_curb || c == Z::lower_curb || c == Z::parking; };
    if (from_exit || to_entrance) return true;
    if (from_entrance && to_exit) return true;
    if (stop(from) && stop(to)) return true;
    if (from == Z::upper_entrance && to == Z::lower_curb) return true;
    if (from == Z::lower_entrance && to == Z::upper_curb) return true;
    if (from == Z::upper_curb && to == Z::lower_exit) return true;
    if (from == Z::lower_curb && to == Z::upper_exit) return true;
    return false;
}

OdMatrix random_feasible_od(const std::vector<Zone>& zones, const ZeroMask& mask, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 200.0);
    OdMatrix od(zones.size(), 0);
    for (auto [i, j] : mask.free_entries()) od.at(i, j) = u(rng);
    return od;
}

}  // namespace

TEST_CASE("zero mask follows the feasibility rules") {
    for (const RoadNetwork& net : {make_demo_network(), make_lax_network()}) {
        const ZeroMask mask = build_zero_mask(net.zones);
        std::size_t free = 0;
        for (std::size_t i = 0; i < net.zones.size(); ++i)
            for (std::size_t j = 0; j < net.zones.size(); ++j) {
                const bool expect_zero = i == j || rule_zero(net.zones[i].cls, net.zones[j].cls);
                CHECK(mask.is_zero(i, j) == expect_zero);
                free += expect_zero ? 0 : 1;
            }
        CHECK(mask.free_count() == free);
    }
}

TEST_CASE("zero mask spot checks") {
    const RoadNetwork net = make_demo_network();
    const ZeroMask mask = build_zero_mask(net.zones);
    // Demo zone ids follow class order Z1..Z7.
    for (int z = 0; z < 7; ++z) CHECK(mask.is_zero(z, z));
    for (int j = 0; j < 7; ++j) CHECK(mask.is_zero(1, j));  // from an upper exit
    CHECK(mask.is_zero(0, 5));                               // upper entrance -> lower curb
    CHECK(mask.is_free(0, 4));
    CHECK(mask.is_free(6, 3));
}

TEST_CASE("LAX-scale mask has 161 free entries out of 1024") {
    const RoadNetwork net = make_lax_network();
    REQUIRE(net.zones.size() == 32);
    CHECK(build_zero_mask(net.zones).free_count() == 161);
}

TEST_CASE("vectorize and devectorize round trip") {
    const RoadNetwork net = make_lax_network();
    const ZeroMask mask = build_zero_mask(net.zones);
    std::mt19937_64 rng(3);
    const OdMatrix od = random_feasible_od(net.zones, mask, rng);
    const auto v = vectorize(od, mask);
    CHECK(v.size() == 161);
    const OdMatrix back = devectorize(v, mask, 0);
    CHECK(back.demand == od.demand);
    CHECK_THROWS_AS(devectorize(std::vector<double>(3), mask, 0), ShapeError);
}

TEST_CASE("constraint assembly") {
    const RoadNetwork net = make_demo_network();
    const ZeroMask mask = build_zero_mask(net.zones);

    SUBCASE("demo has 8 rows and zero observation gives b = 0") {
        const FlowObservation obs = observe(net.zones, OdMatrix(7, 0));
        const auto sys = assemble_constraints(net.zones, obs, mask);
        CHECK(sys.a.rows == 8);
        CHECK(sys.b == std::vector<double>(8, 0.0));
        for (std::size_t r = 0; r < sys.a.rows; ++r) CHECK(sys.a.row_nonzeros(r) > 0);
        for (auto [i, j] : sys.columns) CHECK(mask.is_free(i, j));
    }
    SUBCASE("entrance row sums its free entries") {
        FlowObservation obs = observe(net.zones, OdMatrix(7, 0));
        obs.boundary[0] = 100.0;
        const auto sys = assemble_constraints(net.zones, obs, mask);
        CHECK(sys.row_tags[0] == "entrance_total:0");
        CHECK(sys.b[0] == 100.0);
        std::size_t expected = 0;
        for (auto [i, j] : sys.columns) expected += (i == 0);
        CHECK(sys.a.row_nonzeros(0) == expected);
        for (std::size_t k = sys.a.row_start[0]; k < sys.a.row_start[1]; ++k) {
            CHECK(sys.columns[sys.a.col_index[k]].first == 0);
            CHECK(sys.a.values[k] == 1.0);
        }
    }
    SUBCASE("A d reproduces the observation of a known OD") {
        std::mt19937_64 rng(4);
        const OdMatrix od = random_feasible_od(net.zones, mask, rng);
        const auto sys = assemble_constraints(net.zones, observe(net.zones, od), mask);
        const auto ad = sys.a.multiply(vectorize(od, mask));
        for (std::size_t r = 0; r < ad.size(); ++r) CHECK(ad[r] == doctest::Approx(sys.b[r]));
    }
    SUBCASE("missing or negative observations are rejected") {
        FlowObservation obs = observe(net.zones, OdMatrix(7, 0));
        obs.boundary.erase(2);
        CHECK_THROWS_AS(assemble_constraints(net.zones, obs, mask), AssemblyError);
        obs = observe(net.zones, OdMatrix(7, 0));
        obs.parking[6].in_lower = -1.0;
        CHECK_THROWS_AS(assemble_constraints(net.zones, obs, mask), AssemblyError);
    }
}

TEST_CASE("NNLS small systems") {
    SUBCASE("identity") {
        const auto a = SparseMatrix::from_dense({{1, 0}, {0, 1}});
        const std::vector<double> b{3, 5};
        const auto res = solve_nnls(a, b);
        CHECK(res.x[0] == doctest::Approx(3.0));
        CHECK(res.x[1] == doctest::Approx(5.0));
        CHECK(res.objective == doctest::Approx(0.0));
    }
    SUBCASE("b = 0 gives x = 0") {
        const auto a = SparseMatrix::from_dense({{1, 1}, {0, 2}});
        const auto res = solve_nnls(a, std::vector<double>{0, 0});
        CHECK(res.x == std::vector<double>{0, 0});
        CHECK(res.objective == 0.0);
    }
    SUBCASE("sign conflict projects to zero, checked by grid search") {
        const auto a = SparseMatrix::from_dense({{1}});
        const std::vector<double> b{-2};
        const auto res = solve_nnls(a, b);
        double best_d = -1.0, best_f = 1e300;
        for (int k = 0; k <= 5000; ++k) {
            const double d = 0.001 * k;
            const double f = (d + 2.0) * (d + 2.0);
            if (f < best_f) {
                best_f = f;
                best_d = d;
            }
        }
        CHECK(res.x[0] == best_d);
        CHECK(res.objective == doctest::Approx(best_f));
        CHECK(res.objective == doctest::Approx(4.0));
    }
    SUBCASE("spectral norm of a diagonal matrix") {
        const auto a = SparseMatrix::from_dense({{3, 0, 0}, {0, 1, 0}, {0, 0, 2}});
        CHECK(gram_spectral_norm(a, 500) == doctest::Approx(9.0));
    }
}

TEST_CASE("NNLS trace is monotone and exact fixtures are solved") {
    const RoadNetwork net = make_lax_network();
    const ZeroMask mask = build_zero_mask(net.zones);
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const OdMatrix od = random_feasible_od(net.zones, mask, rng);
        const auto sys = assemble_constraints(net.zones, observe(net.zones, od), mask);
        NnlsOptions opts;
        opts.record_trace = true;
        const auto res = solve_nnls(sys.a, sys.b, opts);
        REQUIRE_FALSE(res.trace.empty());
        for (std::size_t k = 1; k < res.trace.size(); ++k) CHECK(res.trace[k] <= res.trace[k - 1]);
        double bb = 0.0;
        for (double v : sys.b) bb += v * v;
        CHECK(res.objective <= 1e-6 * bb);
        for (double x : res.x) CHECK(x >= 0.0);

        const OdMatrix d = solve_feasible_od(sys, mask, 0, {}, true);
        for (std::size_t i = 0; i < d.zones; ++i)
            for (std::size_t j = 0; j < d.zones; ++j) {
                if (mask.is_zero(i, j)) CHECK(d.at(i, j) == 0.0);
                CHECK(d.at(i, j) >= 0.0);
            }
    }
}

TEST_CASE("infeasible observations fail only when feasibility is required") {
    const RoadNetwork net = make_demo_network();
    const ZeroMask mask = build_zero_mask(net.zones);
    FlowObservation obs = observe(net.zones, OdMatrix(7, 3));
    obs.parking[6].out_upper = 100.0;  // parking outflow to an upper exit that sees no traffic
    obs.boundary[1] = 0.0;
    const auto sys = assemble_constraints(net.zones, obs, mask);
    const OdMatrix d = solve_feasible_od(sys, mask, 3);
    for (double v : d.demand) CHECK(v >= 0.0);
    CHECK_THROWS_AS(solve_feasible_od(sys, mask, 3, {}, true), ConvergenceError);
}

TEST_CASE("OD and observation files round trip") {
    const RoadNetwork net = make_demo_network();
    const ZeroMask mask = build_zero_mask(net.zones);
    std::mt19937_64 rng(11);
    OdMatrix od = random_feasible_od(net.zones, mask, rng);
    od.hour = 17;
    std::stringstream ss;
    write_od_csv(ss, od, mask);
    const OdMatrix back = read_od_csv(ss, mask);
    CHECK(back.hour == 17);
    CHECK(back.demand == od.demand);

    std::stringstream bad("# hour=0 zones=7\norigin_zone,dest_zone,demand\n1,0,5\n");
    CHECK_THROWS_AS(read_od_csv(bad, mask), ParseError);
    std::stringstream neg("# hour=0 zones=7\norigin_zone,dest_zone,demand\n0,4,-5\n");
    CHECK_THROWS_AS(read_od_csv(neg, mask), ParseError);

    std::vector<FlowObservation> obs{observe(net.zones, od), observe(net.zones, OdMatrix(7, 18))};
    obs[1].hour = 18;
    std::stringstream os;
    write_observations_csv(os, obs);
    CHECK(read_observations_csv(os) == obs);
}
