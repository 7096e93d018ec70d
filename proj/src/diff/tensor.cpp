#include "nclust/diff/tensor.hpp"

#include "nclust/error.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace nclust::diff {

namespace {

std::size_t extent_product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape, Real fill)
    : shape_(std::move(shape)), data_(extent_product(shape_), fill) {
    if (shape_.empty()) throw ShapeError("tensor shape must have at least one extent");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<Real> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_.empty()) throw ShapeError("tensor shape must have at least one extent");
    if (data_.size() != extent_product(shape_)) {
        throw ShapeError("tensor of shape " + shape_string(shape_) + " given " +
                         std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::column(std::vector<Real> values) {
    const std::size_t n = values.size();
    return Tensor({n, 1}, std::move(values));
}

Tensor Tensor::row(std::vector<Real> values) {
    const std::size_t n = values.size();
    return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Real> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows_slow() const {
    if (shape_.size() == 1) return 1;
    if (shape_.size() == 2) return shape_[0];
    throw ShapeError("expected rank ≤ 2, got " + shape_string(shape_));
}

std::size_t Tensor::cols_slow() const {
    if (shape_.size() == 1) return shape_[0];
    if (shape_.size() == 2) return shape_[1];
    throw ShapeError("expected rank ≤ 2, got " + shape_string(shape_));
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (Real v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

} // namespace nclust::diff
