#include "nclust/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace nclust::diff {

double GradCheckReport::max_rel() const {
    double m = 0.0;
    for (const auto& p : params) m = std::max(m, p.max_rel);
    return m;
}

namespace {

Real eval_loss(ParamSet& params, const LossBuilder& loss) {
    Graph g;
    return loss(g, params).value()[0];
}

} // namespace

GradCheckReport grad_check(ParamSet& params, const LossBuilder& loss, Real h, Real abs_floor) {
    GradCheckReport report;
    params.clear_grad();
    {
        Graph g;
        Var l = loss(g, params);
        g.backward(l);
    }
    for (auto& p : params) {
        if (!p.trainable) continue;
        const Tensor analytic = p.grad.empty() ? Tensor(p.value.shape(), 0.0) : p.grad;
        ParamGradError e{p.name, p.value.size(), 0.0, 0.0};
        double total = 0.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const Real saved = p.value[i];
            p.value[i] = saved + h;
            const Real up = eval_loss(params, loss);
            p.value[i] = saved - h;
            const Real down = eval_loss(params, loss);
            p.value[i] = saved;
            const Real numeric = (up - down) / (2.0 * h);
            const Real a = analytic[i];
            const Real rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), abs_floor});
            e.max_rel = std::max(e.max_rel, rel);
            total += rel;
        }
        e.mean_rel = e.entries ? total / static_cast<double>(e.entries) : 0.0;
        report.params.push_back(std::move(e));
    }
    params.clear_grad();
    return report;
}

GradCheckReport grad_check(const std::function<GradCheckProblem(std::uint64_t seed)>& builder, std::uint64_t seed,
                           Real h) {
    GradCheckProblem problem = builder(seed);
    return grad_check(problem.params, problem.loss, h);
}

} // namespace nclust::diff
