#pragma once

#include "nclust/diff/tensor.hpp"
#include "nclust/rng.hpp"

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

namespace nclust::diff {

/// A named learnable tensor. `grad` is empty until a backward pass or
/// zero_grad() allocates it.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

/// Ordered collection of uniquely named parameters. References returned by
/// add() stay valid as the set grows. Iteration order is
/// insertion order, which fixes checkpoint layout and RNG consumption.
class ParamSet {
public:
    Param& add(std::string name, Tensor value, bool trainable = true);

    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.contains(name); }

    std::size_t size() const noexcept { return params_.size(); }
    bool empty() const noexcept { return params_.empty(); }
    std::size_t scalar_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    /// Allocates zero gradients for every trainable parameter.
    void zero_grad();
    void clear_grad();

    /// Element-wise equality of names, shapes and values.
    bool same_values(const ParamSet& other) const;

private:
    std::deque<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// p ← p − lr·(grad + weight_decay·p) for every trainable parameter, then
/// clears the gradients. Throws StateError if a trainable grad is missing.
void sgd_step(ParamSet& params, Real lr, Real weight_decay);

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before scaling.
Real clip_grad_norm(ParamSet& params, Real max_norm);

/// Uniform in [−1/√fan_in, +1/√fan_in].
Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

} // namespace nclust::diff
