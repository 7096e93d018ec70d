#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace nclust::diff {

using Real = double;

/// Dense row-major tensor. Every op in this library works on rank-1 or
/// rank-2 tensors; a rank-1 tensor of extent n is treated as a 1×n row.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, Real fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<Real> values);

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
    static Tensor scalar(Real v) { return Tensor({1, 1}, {v}); }
    static Tensor column(std::vector<Real> values);
    static Tensor row(std::vector<Real> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return shape_.empty(); }

    std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : rows_slow(); }
    std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : cols_slow(); }

    Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    std::span<Real> values() noexcept { return data_; }
    std::span<const Real> values() const noexcept { return data_; }
    std::span<Real> row_span(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const Real> row_span(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    void fill(Real v);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    bool operator==(const Tensor&) const = default;

private:
    std::size_t rows_slow() const;
    std::size_t cols_slow() const;
    std::vector<std::size_t> shape_;
    std::vector<Real> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

} // namespace nclust::diff
