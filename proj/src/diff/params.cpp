#include "nclust/diff/params.hpp"

#include "nclust/error.hpp"

#include <cmath>

namespace nclust::diff {

Param& ParamSet::add(std::string name, Tensor value, bool trainable) {
    if (index_.contains(name)) throw SchemaError("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    params_.push_back(Param{std::move(name), std::move(value), Tensor{}, trainable});
    return params_.back();
}

Param& ParamSet::at(const std::string& name) {
    Param* p = find(name);
    if (!p) throw SchemaError("unknown parameter: " + name);
    return *p;
}

const Param& ParamSet::at(const std::string& name) const {
    const Param* p = find(name);
    if (!p) throw SchemaError("unknown parameter: " + name);
    return *p;
}

Param* ParamSet::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

const Param* ParamSet::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParamSet::zero_grad() {
    for (auto& p : params_) {
        if (p.trainable) p.grad = Tensor(p.value.shape(), 0.0);
    }
}

void ParamSet::clear_grad() {
    for (auto& p : params_) p.grad = Tensor{};
}

bool ParamSet::same_values(const ParamSet& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name != other.params_[i].name) return false;
        if (params_[i].value != other.params_[i].value) return false;
    }
    return true;
}

void sgd_step(ParamSet& params, Real lr, Real weight_decay) {
    for (auto& p : params) {
        if (!p.trainable) continue;
        if (p.grad.empty()) throw StateError("sgd_step: parameter '" + p.name + "' has no gradient");
        if (!p.grad.same_shape(p.value)) throw ShapeError("sgd_step: gradient shape mismatch for '" + p.name + "'");
    }
    for (auto& p : params) {
        if (!p.trainable) continue;
        auto v = p.value.values();
        auto g = p.grad.values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * (g[i] + weight_decay * v[i]);
        p.grad = Tensor{};
    }
}

Real clip_grad_norm(ParamSet& params, Real max_norm) {
    Real sq = 0.0;
    for (const auto& p : params)
        for (Real g : p.grad.values()) sq += g * g;
    const Real norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const Real f = max_norm / norm;
        for (auto& p : params)
            for (Real& g : p.grad.values()) g *= f;
    }
    return norm;
}

Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(fan_in));
    Tensor t = Tensor::zeros(rows, cols);
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

} // namespace nclust::diff
