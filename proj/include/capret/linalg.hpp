#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace capret {

using Vec = std::vector<double>;
using VecView = std::span<const double>;

// Dense row-major matrix of doubles. Rows are frames, captions or queries.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);
    static Matrix from_rows(const std::vector<Vec>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    VecView row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    void append_row(VecView v);

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(VecView a, VecView b);
double norm(VecView a);

// Cosine similarity clamped to [-1, 1]. Throws DataError on a zero-norm
// argument and ShapeError on a length mismatch.
double cosine(VecView a, VecView b);

// Numerically stable softmax of logits / temperature (max-subtracted).
Vec softmax(VecView logits, double temperature = 1.0);

// log(sum(exp(x))) with max subtraction.
double log_sum_exp(VecView x);

void require_same_dim(VecView a, VecView b, const char* what);

}  // namespace capret
