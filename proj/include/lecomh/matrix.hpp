#pragma once

#include <cstddef>
#include <vector>

namespace lecomh {

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    double* row(std::size_t r) { return values.data() + r * cols; }
    const double* row(std::size_t r) const { return values.data() + r * cols; }

    bool empty() const { return rows == 0 || cols == 0; }
};

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);

// c = a^T * b  (used for weight gradients)
Matrix matmul_at_b(const Matrix& a, const Matrix& b);

// c = a * b^T  (used for backpropagating deltas)
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);
bool all_finite(const std::vector<double>& v);

}  // namespace lecomh
