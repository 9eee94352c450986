#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sounderfeit {

// Dense row-major matrix of doubles.
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

    // Resizes without preserving contents; reuses capacity.
    void reshape(std::size_t r, std::size_t c) {
        rows = r;
        cols = c;
        data.resize(r * c);
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Matrix products used by the dense layers. Each comes in an OpenMP flavour
// (parallel over output rows) and a plain serial reference used by tests and
// the benchmark. Outputs are resized; shape mismatches throw Error(shape).
namespace kernels {

void gemm(const Matrix& a, const Matrix& b, Matrix& c);     // c = a * b
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);  // c = a^T * b
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);  // c = a * b^T

// Adds `bias` to every row of `m`.
void add_row_bias(Matrix& m, std::span<const double> bias);
// out[j] = sum over rows of m(r, j).
void column_sums(const Matrix& m, std::span<double> out);

namespace serial {
void gemm(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
}  // namespace serial

}  // namespace kernels
}  // namespace sounderfeit
