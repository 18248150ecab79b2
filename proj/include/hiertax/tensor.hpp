#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hiertax {

/// Row-major (batch, width) matrix of doubles.
class Tensor {
  public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    void fill(double v);
    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a (n,k) times b (k,m).
Tensor matmul(const Tensor& a, const Tensor& b);
/// out += a^T b for a (n,k), b (n,m), out (k,m).
void add_matmul_at_b(const Tensor& a, const Tensor& b, Tensor& out);
/// a (n,m) times b^T for b (k,m).
Tensor matmul_a_bt(const Tensor& a, const Tensor& b);

/// Column-wise concatenation of tensors with equal row counts.
Tensor hconcat(std::span<const Tensor* const> parts);
/// Columns [begin, begin + width) of t.
Tensor column_slice(const Tensor& t, std::size_t begin, std::size_t width);

/// Rows `indices` of t, in that order.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices);

} // namespace hiertax
