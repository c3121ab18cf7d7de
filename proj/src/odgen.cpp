#include "odnet/odgen.hpp"

#include "odnet/csv.hpp"
#include "odnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>

namespace odnet {

namespace {

bool in(ZoneClass c, std::initializer_list<ZoneClass> set) { return std::find(set.begin(), set.end(), c) != set.end(); }

bool is_entrance(ZoneClass c) { return in(c, {ZoneClass::upper_entrance, ZoneClass::lower_entrance}); }
bool is_exit(ZoneClass c) { return in(c, {ZoneClass::upper_exit, ZoneClass::lower_exit}); }
bool is_stop(ZoneClass c) { return in(c, {ZoneClass::upper_curb, ZoneClass::lower_curb, ZoneClass::parking}); }

// True when the zone classes force d_ij = 0 for i != j.
bool structural_zero(ZoneClass from, ZoneClass to) {
    using Z = ZoneClass;
    if (is_exit(from)) return true;                  // nothing originates at an exit
    if (is_entrance(to)) return true;                // nothing terminates at an entrance
    if (is_entrance(from) && is_exit(to)) return true;  // no pass-through
    if (is_stop(from) && is_stop(to)) return true;   // no curb/parking to curb/parking
    if (from == Z::upper_entrance && to == Z::lower_curb) return true;
    if (from == Z::lower_entrance && to == Z::upper_curb) return true;
    if (from == Z::upper_curb && to == Z::lower_exit) return true;
    if (from == Z::lower_curb && to == Z::upper_exit) return true;
    return false;
}

void check_flow(double q, const std::string& ctx) {
    if (!std::isfinite(q) || q < 0.0) throw AssemblyError(ctx + ": flow must be finite and >= 0");
}

}  // namespace

std::vector<std::pair<int, int>> ZeroMask::free_entries() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < zones_; ++i)
        for (std::size_t j = 0; j < zones_; ++j)
            if (is_free(i, j)) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
    return out;
}

std::size_t ZeroMask::free_count() const { return static_cast<std::size_t>(std::count(zero_.begin(), zero_.end(), 0)); }

double OdMatrix::total() const {
    double s = 0.0;
    for (double d : demand) s += d;
    return s;
}

std::vector<double> vectorize(const OdMatrix& od, const ZeroMask& mask) {
    if (od.zones != mask.zones()) throw ShapeError("OD matrix and mask zone counts differ");
    std::vector<double> out;
    out.reserve(mask.free_count());
    for (auto [i, j] : mask.free_entries()) out.push_back(od.at(i, j));
    return out;
}

OdMatrix devectorize(std::span<const double> values, const ZeroMask& mask, int hour) {
    const auto entries = mask.free_entries();
    if (values.size() != entries.size())
        throw ShapeError("OD vector has " + std::to_string(values.size()) + " entries, mask has " +
                         std::to_string(entries.size()) + " free entries");
    OdMatrix od(mask.zones(), hour);
    for (std::size_t k = 0; k < entries.size(); ++k) od.at(entries[k].first, entries[k].second) = values[k];
    return od;
}

// ---------------------------------------------------------------------------

SparseMatrix SparseMatrix::from_dense(const std::vector<std::vector<double>>& dense) {
    SparseMatrix m;
    m.cols = dense.empty() ? 0 : dense.front().size();
    for (const auto& row : dense) {
        if (row.size() != m.cols) throw ShapeError("ragged dense matrix");
        std::vector<std::pair<std::size_t, double>> entries;
        for (std::size_t c = 0; c < row.size(); ++c)
            if (row[c] != 0.0) entries.emplace_back(c, row[c]);
        m.push_row(entries);
    }
    return m;
}

void SparseMatrix::push_row(std::span<const std::pair<std::size_t, double>> entries) {
    for (auto [c, v] : entries) {
        if (c >= cols) throw ShapeError("sparse column index out of range");
        col_index.push_back(c);
        values.push_back(v);
    }
    row_start.push_back(col_index.size());
    ++rows;
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
    if (x.size() != cols) throw ShapeError("A x: vector length mismatch");
    std::vector<double> y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t k = row_start[r]; k < row_start[r + 1]; ++k) acc += values[k] * x[col_index[k]];
        y[r] = acc;
    }
    return y;
}

std::vector<double> SparseMatrix::multiply_transposed(std::span<const double> y) const {
    if (y.size() != rows) throw ShapeError("A^T y: vector length mismatch");
    std::vector<double> x(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = row_start[r]; k < row_start[r + 1]; ++k) x[col_index[k]] += values[k] * y[r];
    return x;
}

// ---------------------------------------------------------------------------

ZeroMask build_zero_mask(std::span<const Zone> zones) {
    ZeroMask mask(zones.size());
    for (std::size_t i = 0; i < zones.size(); ++i)
        for (std::size_t j = 0; j < zones.size(); ++j)
            if (i != j && !structural_zero(zones[i].cls, zones[j].cls)) mask.set_free(i, j);
    return mask;
}

ConstraintSystem assemble_constraints(std::span<const Zone> zones, const FlowObservation& obs, const ZeroMask& mask) {
    if (mask.zones() != zones.size()) throw AssemblyError("mask does not match zone count");
    ConstraintSystem sys;
    sys.columns = mask.free_entries();
    sys.a.cols = sys.columns.size();

    auto add_row = [&](std::string tag, double rhs, auto&& selects) {
        std::vector<std::pair<std::size_t, double>> entries;
        for (std::size_t k = 0; k < sys.columns.size(); ++k)
            if (selects(sys.columns[k].first, sys.columns[k].second)) entries.emplace_back(k, 1.0);
        if (entries.empty()) throw AssemblyError(tag + ": constraint row has no free OD entries");
        sys.a.push_row(entries);
        sys.b.push_back(rhs);
        sys.row_tags.push_back(std::move(tag));
    };
    auto boundary_flow = [&](const Zone& z) {
        auto it = obs.boundary.find(z.id);
        const std::string ctx = "zone " + std::to_string(z.id) + " (" + std::string(zone_class_name(z.cls)) + ")";
        if (it == obs.boundary.end()) throw AssemblyError(ctx + ": missing flow observation");
        check_flow(it->second, ctx);
        return it->second;
    };
    auto cls = [&](int z) { return zones[static_cast<std::size_t>(z)].cls; };

    for (const Zone& z : zones)
        if (is_entrance(z.cls))
            add_row("entrance_total:" + std::to_string(z.id), boundary_flow(z), [&](int i, int) { return i == z.id; });
    for (const Zone& z : zones)
        if (is_exit(z.cls))
            add_row("exit_total:" + std::to_string(z.id), boundary_flow(z), [&](int, int j) { return j == z.id; });
    for (const Zone& z : zones) {
        if (z.cls != ZoneClass::parking) continue;
        auto it = obs.parking.find(z.id);
        const std::string ctx = "zone " + std::to_string(z.id) + " (Z7)";
        if (it == obs.parking.end()) throw AssemblyError(ctx + ": missing parking level observation");
        const ParkingFlows& p = it->second;
        for (double q : {p.in_upper, p.in_lower, p.out_upper, p.out_lower}) check_flow(q, ctx);
        const int id = z.id;
        add_row("parking_in_upper:" + std::to_string(id), p.in_upper,
                [&](int i, int j) { return j == id && cls(i) == ZoneClass::upper_entrance; });
        add_row("parking_in_lower:" + std::to_string(id), p.in_lower,
                [&](int i, int j) { return j == id && cls(i) == ZoneClass::lower_entrance; });
        add_row("parking_out_upper:" + std::to_string(id), p.out_upper,
                [&](int i, int j) { return i == id && cls(j) == ZoneClass::upper_exit; });
        add_row("parking_out_lower:" + std::to_string(id), p.out_lower,
                [&](int i, int j) { return i == id && cls(j) == ZoneClass::lower_exit; });
    }
    return sys;
}

FlowObservation observe(std::span<const Zone> zones, const OdMatrix& od) {
    if (od.zones != zones.size()) throw ShapeError("OD matrix does not match zone count");
    FlowObservation obs;
    obs.hour = od.hour;
    const std::size_t n = zones.size();
    for (std::size_t z = 0; z < n; ++z) {
        const ZoneClass c = zones[z].cls;
        double s = 0.0;
        if (is_entrance(c)) {
            for (std::size_t j = 0; j < n; ++j) s += od.at(z, j);
            obs.boundary[zones[z].id] = s;
        } else if (is_exit(c)) {
            for (std::size_t i = 0; i < n; ++i) s += od.at(i, z);
            obs.boundary[zones[z].id] = s;
        } else if (c == ZoneClass::parking) {
            ParkingFlows p;
            for (std::size_t k = 0; k < n; ++k) {
                switch (zones[k].cls) {
                    case ZoneClass::upper_entrance: p.in_upper += od.at(k, z); break;
                    case ZoneClass::lower_entrance: p.in_lower += od.at(k, z); break;
                    case ZoneClass::upper_exit: p.out_upper += od.at(z, k); break;
                    case ZoneClass::lower_exit: p.out_lower += od.at(z, k); break;
                    default: break;
                }
            }
            obs.parking[zones[z].id] = p;
        }
    }
    return obs;
}

// ---------------------------------------------------------------------------

double objective(const SparseMatrix& a, std::span<const double> x, std::span<const double> b) {
    const auto ax = a.multiply(x);
    double f = 0.0;
    for (std::size_t r = 0; r < ax.size(); ++r) f += (ax[r] - b[r]) * (ax[r] - b[r]);
    return f;
}

double gram_spectral_norm(const SparseMatrix& a, int iterations) {
    std::vector<double> v(a.cols, 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(a.cols, 1))));
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        auto w = a.multiply_transposed(a.multiply(v));
        double rq = 0.0, norm = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            rq += v[k] * w[k];
            norm += w[k] * w[k];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) v[k] = w[k] / norm;
        const bool done = std::abs(rq - lambda) <= 1e-13 * rq;
        lambda = rq;
        if (done) break;
    }
    return lambda;
}

NnlsResult solve_nnls(const SparseMatrix& a, std::span<const double> b, const NnlsOptions& opts) {
    if (b.size() != a.rows) throw ShapeError("NNLS: b length does not match row count");
    NnlsResult res;
    res.x.assign(a.cols, 0.0);

    auto residual_norm = [&](const std::vector<double>& x, std::vector<double>& r) {
        r = a.multiply(x);
        double f = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k) {
            r[k] -= b[k];
            f += r[k] * r[k];
        }
        return f;
    };

    std::vector<double> r;
    res.objective = residual_norm(res.x, r);
    if (res.objective == 0.0 || a.cols == 0) return res;

    res.lipschitz = gram_spectral_norm(a, opts.power_iterations);
    if (!(res.lipschitz > 0.0)) throw DomainError("NNLS: coefficient matrix is zero");
    const double step = 1.0 / res.lipschitz;

    std::vector<double> x = res.x;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        const auto g = a.multiply_transposed(r);
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::max(0.0, x[k] - step * g[k]);
        const double f = residual_norm(x, r);
        res.iterations = it;
        if (f > res.objective) break;  // rounding noise at the floor; keep best
        if (opts.record_trace) res.trace.push_back(f);
        const double gain = res.objective - f;
        res.x = x;
        const double prev = res.objective;
        res.objective = f;
        if (f == 0.0 || gain < opts.rel_tol * prev) break;
    }
    return res;
}

OdMatrix solve_feasible_od(const ConstraintSystem& sys, const ZeroMask& mask, int hour, const NnlsOptions& opts,
                           bool require_feasible) {
    if (sys.a.cols != mask.free_count()) throw ShapeError("constraint system does not match mask");
    const NnlsResult res = solve_nnls(sys.a, sys.b, opts);
    if (require_feasible) {
        double bb = 0.0;
        for (double v : sys.b) bb += v * v;
        if (res.objective > 1e-6 * bb)
            throw ConvergenceError("hour " + std::to_string(hour) + ": NNLS residual " + std::to_string(res.objective) +
                                   " exceeds 1e-6*||b||^2 = " + std::to_string(1e-6 * bb) + " after " +
                                   std::to_string(res.iterations) + " iterations");
    }
    return devectorize(res.x, mask, hour);
}

// ---------------------------------------------------------------------------

void write_od_csv(std::ostream& out, const OdMatrix& od, const ZeroMask& mask) {
    out << "# hour=" << od.hour << " zones=" << od.zones << '\n';
    out << "origin_zone,dest_zone,demand\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (auto [i, j] : mask.free_entries()) out << i << ',' << j << ',' << od.at(i, j) << '\n';
}

OdMatrix read_od_csv(std::istream& in, const ZeroMask& mask) {
    csv::Reader reader(in);
    const auto meta = reader.header_values();
    const int hour = meta.contains("hour") ? std::stoi(meta.at("hour")) : 0;
    if (meta.contains("zones") && std::stoul(meta.at("zones")) != mask.zones())
        throw ParseError("OD file has zones=" + meta.at("zones") + ", network has " + std::to_string(mask.zones()));
    OdMatrix od(mask.zones(), hour);
    reader.expect_columns({"origin_zone", "dest_zone", "demand"});
    while (auto row = reader.next()) {
        const int i = row->integer(0), j = row->integer(1);
        const double d = row->number(2);
        if (i < 0 || j < 0 || std::size_t(i) >= mask.zones() || std::size_t(j) >= mask.zones())
            throw ParseError(row->context() + ": zone out of range");
        if (mask.is_zero(i, j)) throw ParseError(row->context() + ": entry is a structural zero");
        if (!std::isfinite(d) || d < 0.0) throw ParseError(row->context() + ": demand must be finite and >= 0");
        od.at(i, j) = d;
    }
    return od;
}

void write_observations_csv(std::ostream& out, std::span<const FlowObservation> obs) {
    out << "hour,zone,level,flow\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& o : obs) {
        for (auto [z, q] : o.boundary) out << o.hour << ',' << z << ",total," << q << '\n';
        for (auto [z, p] : o.parking) {
            out << o.hour << ',' << z << ",in_upper," << p.in_upper << '\n';
            out << o.hour << ',' << z << ",in_lower," << p.in_lower << '\n';
            out << o.hour << ',' << z << ",out_upper," << p.out_upper << '\n';
            out << o.hour << ',' << z << ",out_lower," << p.out_lower << '\n';
        }
    }
}

std::vector<FlowObservation> read_observations_csv(std::istream& in) {
    csv::Reader reader(in);
    reader.expect_columns({"hour", "zone", "level", "flow"});
    std::map<int, FlowObservation> by_hour;
    while (auto row = reader.next()) {
        const int hour = row->integer(0), zone = row->integer(1);
        const std::string level = row->text(2);
        const double q = row->number(3);
        if (!std::isfinite(q) || q < 0.0) throw ParseError(row->context() + ": flow must be finite and >= 0");
        FlowObservation& o = by_hour[hour];
        o.hour = hour;
        if (level == "total") {
            o.boundary[zone] = q;
            continue;
        }
        ParkingFlows& p = o.parking[zone];
        if (level == "in_upper")
            p.in_upper = q;
        else if (level == "in_lower")
            p.in_lower = q;
        else if (level == "out_upper")
            p.out_upper = q;
        else if (level == "out_lower")
            p.out_lower = q;
        else
            throw ParseError(row->context() + ": unknown level '" + level + "'");
    }
    std::vector<FlowObservation> out;
    for (auto& [h, o] : by_hour) out.push_back(std::move(o));
    return out;
}

}  // namespace odnet
