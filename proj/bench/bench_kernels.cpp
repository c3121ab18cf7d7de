// Serial vs OpenMP timings for the NN products and the per-hour dataset build.
// Usage: bench_kernels [reps]

#include "odnet/kernels.hpp"
#include "odnet/pipeline.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>

using namespace odnet;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(r, c);
    for (double& v : m.data) v = dist(rng);
    return m;
}

template <typename Fn>
double time_best(int reps, Fn&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void report(const char* name, double serial, double parallel, bool same) {
    std::printf("%-28s serial %9.4f s  omp %9.4f s  speedup %5.2fx  %s\n", name, serial, parallel,
                serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
    std::printf("threads: %d\n", omp_get_max_threads());
    std::mt19937_64 rng(2024);

    // Shapes of one full-batch pass of the LAX-scale model (600 x 35 -> 80 -> 161),
    // scaled up so the timings are measurable.
    const Matrix x = random_matrix(4800, 35, rng);
    const Matrix w1 = random_matrix(512, 35, rng);
    const Matrix h = random_matrix(4800, 512, rng);
    const Matrix w2 = random_matrix(161, 512, rng);
    const Matrix d = random_matrix(4800, 161, rng);
    const std::vector<double> bias(512, 0.5);

    Matrix cs, cp;
    double ts = time_best(reps, [&] { kernels::gemm_nt(x, w1, bias, cs, Exec::serial); });
    double tp = time_best(reps, [&] { kernels::gemm_nt(x, w1, bias, cp, Exec::parallel); });
    report("gemm_nt (forward)", ts, tp, cs == cp);

    ts = time_best(reps, [&] { kernels::gemm_tn(d, h, cs, Exec::serial); });
    tp = time_best(reps, [&] { kernels::gemm_tn(d, h, cp, Exec::parallel); });
    report("gemm_tn (weight grad)", ts, tp, cs == cp);

    ts = time_best(reps, [&] { kernels::gemm_nn(d, w2, cs, Exec::serial); });
    tp = time_best(reps, [&] { kernels::gemm_nn(d, w2, cp, Exec::parallel); });
    report("gemm_nn (backprop)", ts, tp, cs == cp);

    const RoadNetwork net = make_lax_network();
    SyntheticDemandProfile profile = default_profile(net);
    profile.days = 2;
    const auto obs = generate_synthetic_observations(net, profile);
    DatasetOptions opts;
    Dataset ds, dp;
    opts.exec = Exec::serial;
    ts = time_best(1, [&] { ds = build_dataset(net, obs, opts); });
    opts.exec = Exec::parallel;
    tp = time_best(1, [&] { dp = build_dataset(net, obs, opts); });
    report("build_dataset (48 hours)", ts, tp, ds.inputs == dp.inputs && ds.targets == dp.targets);
    return 0;
}
