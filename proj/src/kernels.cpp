#include "sounderfeit/kernels.hpp"

#include <algorithm>
#include <string>

#include "sounderfeit/error.hpp"

namespace sounderfeit::kernels {

namespace {

// Below this many multiply-adds the parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

void require(bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::shape, what);
}

}  // namespace

namespace serial {

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
    require(a.cols == b.rows, "gemm: inner dimensions differ");
    c.reshape(a.rows, b.cols);
    std::fill(c.data.begin(), c.data.end(), 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* ci = c.data.data() + i * c.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            const double* bk = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
    require(a.rows == b.rows, "gemm_tn: row counts differ");
    c.reshape(a.cols, b.cols);
    std::fill(c.data.begin(), c.data.end(), 0.0);
    for (std::size_t i = 0; i < a.cols; ++i) {
        double* ci = c.data.data() + i * c.cols;
        for (std::size_t k = 0; k < a.rows; ++k) {
            const double aki = a(k, i);
            const double* bk = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
        }
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
    require(a.cols == b.cols, "gemm_nt: column counts differ");
    c.reshape(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* bj = b.data.data() + j * b.cols;
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
            c(i, j) = acc;
        }
    }
}

}  // namespace serial

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
    require(a.cols == b.rows, "gemm: inner dimensions differ");
    c.reshape(a.rows, b.cols);
    const auto rows = static_cast<std::ptrdiff_t>(a.rows);
    const std::size_t inner = a.cols;
    const std::size_t n = b.cols;
#pragma omp parallel for schedule(static) if (a.rows * inner * n > kParallelWork)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        double* ci = c.data.data() + static_cast<std::size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        const double* ai = a.data.data() + static_cast<std::size_t>(i) * inner;
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = ai[k];
            const double* bk = b.data.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
    require(a.rows == b.rows, "gemm_tn: row counts differ");
    c.reshape(a.cols, b.cols);
    const auto out_rows = static_cast<std::ptrdiff_t>(a.cols);
    const std::size_t depth = a.rows;
    const std::size_t n = b.cols;
#pragma omp parallel for schedule(static) if (a.cols * depth * n > kParallelWork)
    for (std::ptrdiff_t i = 0; i < out_rows; ++i) {
        double* ci = c.data.data() + static_cast<std::size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        for (std::size_t k = 0; k < depth; ++k) {
            const double aki = a.data[k * a.cols + static_cast<std::size_t>(i)];
            const double* bk = b.data.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
        }
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
    require(a.cols == b.cols, "gemm_nt: column counts differ");
    c.reshape(a.rows, b.rows);
    const auto rows = static_cast<std::ptrdiff_t>(a.rows);
    const std::size_t depth = a.cols;
    const std::size_t n = b.rows;
#pragma omp parallel for schedule(static) if (a.rows * depth * n > kParallelWork)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const double* ai = a.data.data() + static_cast<std::size_t>(i) * depth;
        double* ci = c.data.data() + static_cast<std::size_t>(i) * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.data.data() + j * depth;
            double acc = 0.0;
            for (std::size_t k = 0; k < depth; ++k) acc += ai[k] * bj[k];
            ci[j] = acc;
        }
    }
}

void add_row_bias(Matrix& m, std::span<const double> bias) {
    require(bias.size() == m.cols, "bias width differs from matrix columns");
    for (std::size_t r = 0; r < m.rows; ++r) {
        auto row = m.row(r);
        for (std::size_t j = 0; j < m.cols; ++j) row[j] += bias[j];
    }
}

void column_sums(const Matrix& m, std::span<double> out) {
    require(out.size() == m.cols, "column sum target has the wrong width");
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const auto row = m.row(r);
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += row[j];
    }
}

}  // namespace sounderfeit::kernels
