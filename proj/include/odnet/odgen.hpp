#pragma once

// Feasible OD matrix generation from boundary flow observations.
//
// The zone classes fix which OD entries are structurally zero; the observed
// entrance/exit totals and parking-structure level totals give a linear
// system A d = b over the remaining (free) entries. The OD vector is the
// nonnegative least-squares solution of that system.

#include "odnet/network.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace odnet {

class ZeroMask {
public:
    ZeroMask() = default;
    explicit ZeroMask(std::size_t zones) : zones_(zones), zero_(zones * zones, 1) {}

    std::size_t zones() const { return zones_; }
    bool is_zero(std::size_t i, std::size_t j) const { return zero_[i * zones_ + j] != 0; }
    bool is_free(std::size_t i, std::size_t j) const { return !is_zero(i, j); }
    void set_free(std::size_t i, std::size_t j) { zero_[i * zones_ + j] = 0; }

    // Free (origin, dest) pairs in row-major order; this is the OD-vector order.
    std::vector<std::pair<int, int>> free_entries() const;
    std::size_t free_count() const;

    bool operator==(const ZeroMask&) const = default;

private:
    std::size_t zones_ = 0;
    std::vector<std::uint8_t> zero_;
};

struct OdMatrix {
    std::size_t zones = 0;
    int hour = 0;
    std::vector<double> demand;  // zones x zones, row-major, veh/h

    OdMatrix() = default;
    OdMatrix(std::size_t z, int h) : zones(z), hour(h), demand(z * z, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return demand[i * zones + j]; }
    double at(std::size_t i, std::size_t j) const { return demand[i * zones + j]; }
    double total() const;
};

std::vector<double> vectorize(const OdMatrix& od, const ZeroMask& mask);
OdMatrix devectorize(std::span<const double> values, const ZeroMask& mask, int hour);

// Level totals of one parking structure.
struct ParkingFlows {
    double in_upper = 0.0;
    double in_lower = 0.0;
    double out_upper = 0.0;
    double out_lower = 0.0;

    bool operator==(const ParkingFlows&) const = default;
};

struct FlowObservation {
    int hour = 0;
    std::map<int, double> boundary;       // Z1..Z4 zone id -> entrance/exit flow
    std::map<int, ParkingFlows> parking;  // Z7 zone id -> level totals

    bool operator==(const FlowObservation&) const = default;
};

// Compressed-row sparse matrix.
struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_start{0};
    std::vector<std::size_t> col_index;
    std::vector<double> values;

    static SparseMatrix from_dense(const std::vector<std::vector<double>>& dense);

    void push_row(std::span<const std::pair<std::size_t, double>> entries);
    std::vector<double> multiply(std::span<const double> x) const;             // A x
    std::vector<double> multiply_transposed(std::span<const double> y) const;  // A^T y
    std::size_t row_nonzeros(std::size_t r) const { return row_start[r + 1] - row_start[r]; }
};

struct ConstraintSystem {
    SparseMatrix a;
    std::vector<double> b;
    std::vector<std::string> row_tags;          // e.g. "entrance_total:3"
    std::vector<std::pair<int, int>> columns;   // free (origin, dest) per column
};

ZeroMask build_zero_mask(std::span<const Zone> zones);

// Throws AssemblyError naming the zone when an observation is missing or a
// row would have no free entries.
ConstraintSystem assemble_constraints(std::span<const Zone> zones, const FlowObservation& obs, const ZeroMask& mask);

// Totals A d of a known OD; the inverse direction of assemble_constraints.
FlowObservation observe(std::span<const Zone> zones, const OdMatrix& od);

struct NnlsOptions {
    double rel_tol = 1e-9;
    int max_iterations = 50000;
    int power_iterations = 500;
    bool record_trace = false;
};

struct NnlsResult {
    std::vector<double> x;
    double objective = 0.0;  // ||A x - b||^2
    double lipschitz = 0.0;
    int iterations = 0;
    std::vector<double> trace;  // objective per iteration when requested
};

// Largest eigenvalue of A^T A by power iteration from the all-ones vector.
double gram_spectral_norm(const SparseMatrix& a, int iterations);

// Projected gradient on ||A x - b||^2 s.t. x >= 0, step 1/lambda_max(A^T A),
// starting from x = 0.
NnlsResult solve_nnls(const SparseMatrix& a, std::span<const double> b, const NnlsOptions& opts = {});

double objective(const SparseMatrix& a, std::span<const double> x, std::span<const double> b);

// Solves the system and devectorizes the result. With require_feasible the
// objective must end below 1e-6 * ||b||^2, else ConvergenceError.
OdMatrix solve_feasible_od(const ConstraintSystem& sys, const ZeroMask& mask, int hour, const NnlsOptions& opts = {},
                           bool require_feasible = false);

// Delimited-text OD file: "# hour=<h> zones=<Z>" header, then
// origin_zone,dest_zone,demand per free entry.
void write_od_csv(std::ostream& out, const OdMatrix& od, const ZeroMask& mask);
OdMatrix read_od_csv(std::istream& in, const ZeroMask& mask);

// Observation file: hour,zone,level,flow with level in
// {total, in_upper, in_lower, out_upper, out_lower}.
void write_observations_csv(std::ostream& out, std::span<const FlowObservation> obs);
std::vector<FlowObservation> read_observations_csv(std::istream& in);

}  // namespace odnet
