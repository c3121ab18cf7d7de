#pragma once

// Dense row-major matrix and the data-parallel products used by the NN.
//
// Every kernel has a serial reference and an OpenMP variant. Each output
// element is accumulated by one thread in a fixed order, so both variants
// produce bitwise-identical results.

#include <cstddef>
#include <span>
#include <vector>

namespace odnet {

enum class Exec { serial, parallel };

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

namespace kernels {

// C = A * B^T + bias (bias broadcast over rows of C; may be empty).
// A: m x k, B: n x k, C: m x n.
void gemm_nt(const Matrix& a, const Matrix& b, std::span<const double> bias, Matrix& c, Exec exec);

// C = A^T * B.  A: k x m, B: k x n, C: m x n.
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, Exec exec);

// C = A * B.  A: m x k, B: k x n, C: m x n.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, Exec exec);

// Column sums of A (length A.cols).
std::vector<double> column_sums(const Matrix& a);

}  // namespace kernels
}  // namespace odnet
