#include "odnet/kernels.hpp"

#include "odnet/error.hpp"

#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace odnet::kernels {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw ShapeError(std::string("shape mismatch in ") + what);
}

inline void nt_row(const Matrix& a, const Matrix& b, std::span<const double> bias, Matrix& c, std::size_t i) {
    const double* ar = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
        const double* br = b.data.data() + j * b.cols;
        double acc = 0.0;
        for (std::size_t k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
        c(i, j) = acc + (bias.empty() ? 0.0 : bias[j]);
    }
}

// Row i of A^T B: sum over k of a(k, i) * b(k, :), accumulated in k order.
inline void tn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
    double* cr = c.data.data() + i * c.cols;
    for (std::size_t j = 0; j < c.cols; ++j) cr[j] = 0.0;
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double s = a(k, i);
        if (s == 0.0) continue;
        const double* br = b.data.data() + k * b.cols;
        for (std::size_t j = 0; j < c.cols; ++j) cr[j] += s * br[j];
    }
}

inline void nn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
    double* cr = c.data.data() + i * c.cols;
    for (std::size_t j = 0; j < c.cols; ++j) cr[j] = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) {
        const double s = a(i, k);
        if (s == 0.0) continue;
        const double* br = b.data.data() + k * b.cols;
        for (std::size_t j = 0; j < c.cols; ++j) cr[j] += s * br[j];
    }
}

template <typename RowFn>
void for_rows(std::size_t n, Exec exec, RowFn&& fn) {
    if (exec == Exec::parallel) {
        const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < n; ++i) fn(i);
    }
}

}  // namespace

void gemm_nt(const Matrix& a, const Matrix& b, std::span<const double> bias, Matrix& c, Exec exec) {
    require(a.cols == b.cols, "gemm_nt");
    require(bias.empty() || bias.size() == b.rows, "gemm_nt bias");
    if (c.rows != a.rows || c.cols != b.rows) c = Matrix(a.rows, b.rows);
    for_rows(a.rows, exec, [&](std::size_t i) { nt_row(a, b, bias, c, i); });
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, Exec exec) {
    require(a.rows == b.rows, "gemm_tn");
    if (c.rows != a.cols || c.cols != b.cols) c = Matrix(a.cols, b.cols);
    for_rows(a.cols, exec, [&](std::size_t i) { tn_row(a, b, c, i); });
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, Exec exec) {
    require(a.cols == b.rows, "gemm_nn");
    if (c.rows != a.rows || c.cols != b.cols) c = Matrix(a.rows, b.cols);
    for_rows(a.rows, exec, [&](std::size_t i) { nn_row(a, b, c, i); });
}

std::vector<double> column_sums(const Matrix& a) {
    std::vector<double> out(a.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) out[c] += a(r, c);
    return out;
}

}  // namespace odnet::kernels
