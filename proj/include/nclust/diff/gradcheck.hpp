#pragma once

#include "nclust/diff/graph.hpp"
#include "nclust/diff/params.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace nclust::diff {

struct ParamGradError {
    std::string name;
    std::size_t entries = 0;
    double max_rel = 0.0;
    double mean_rel = 0.0;
};

struct GradCheckReport {
    std::vector<ParamGradError> params;
    double max_rel() const;
};

/// Builds a scalar loss in `g` from `params`. Must be deterministic.
using LossBuilder = std::function<Var(Graph& g, ParamSet& params)>;

struct GradCheckProblem {
    ParamSet params;
    LossBuilder loss;
};

/// Per-entry relative error |a − n| / max(|a|, |n|, abs_floor) between the
/// reverse-mode gradient a and the central difference n with step h.
GradCheckReport grad_check(ParamSet& params, const LossBuilder& loss, Real h = 1e-5, Real abs_floor = 1e-7);

GradCheckReport grad_check(const std::function<GradCheckProblem(std::uint64_t seed)>& builder, std::uint64_t seed,
                           Real h = 1e-5);

} // namespace nclust::diff
