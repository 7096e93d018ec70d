#include "nclust/metrics.hpp"

#include "nclust/error.hpp"
#include "nclust/log.hpp"

#include <algorithm>
#include <string>

namespace nclust {

std::size_t argmax(std::span<const double> row) {
    if (row.empty()) throw ShapeError("argmax of an empty row");
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

double accuracy(const std::vector<std::vector<double>>& logits, std::span<const std::size_t> labels) {
    if (logits.size() != labels.size())
        throw ShapeError("accuracy: " + std::to_string(logits.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
    if (logits.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (argmax(logits[i]) == labels[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(logits.size());
}

FmaxResult fmax(const std::vector<std::map<std::size_t, double>>& scores,
                const std::vector<std::set<std::size_t>>& truth) {
    if (scores.size() != truth.size())
        throw ShapeError("fmax: " + std::to_string(scores.size()) + " score rows for " + std::to_string(truth.size()) +
                         " truth sets");
    FmaxResult out;
    for (const auto& g : truth)
        if (g.empty()) ++out.excluded_empty;
    if (out.excluded_empty > 0)
        log_warning("fmax: " + std::to_string(out.excluded_empty) +
                    " protein(s) with no true classes excluded from recall");
    const std::size_t recall_n = truth.size() - out.excluded_empty;

    bool have = false;
    for (std::size_t step = 0; step <= fmax_grid_steps; ++step) {
        const double lambda = static_cast<double>(step) / static_cast<double>(fmax_grid_steps);
        double prec_sum = 0.0, rec_sum = 0.0;
        std::size_t m = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            std::size_t predicted = 0, correct = 0;
            for (const auto& [cls, s] : scores[i]) {
                if (s < lambda) continue;
                ++predicted;
                if (truth[i].contains(cls)) ++correct;
            }
            if (predicted > 0) {
                ++m;
                prec_sum += static_cast<double>(correct) / static_cast<double>(predicted);
            }
            if (!truth[i].empty()) rec_sum += static_cast<double>(correct) / static_cast<double>(truth[i].size());
        }
        if (m == 0 || recall_n == 0) continue;
        const double p = prec_sum / static_cast<double>(m);
        const double r = rec_sum / static_cast<double>(recall_n);
        const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        if (!have || f > out.fmax) {
            out.fmax = f;
            out.threshold = lambda;
            have = true;
        }
    }
    return out;
}

FmaxResult fmax(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<std::uint8_t>>& truth) {
    std::vector<std::map<std::size_t, double>> s(scores.size());
    std::vector<std::set<std::size_t>> t(truth.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t c = 0; c < scores[i].size(); ++c) s[i][c] = scores[i][c];
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t c = 0; c < truth[i].size(); ++c)
            if (truth[i][c]) t[i].insert(c);
    return fmax(s, t);
}

NominationRecall nomination_recall(const ScoreTrace& trace, std::span<const std::size_t> motif_ids) {
    if (motif_ids.empty()) throw SchemaError("nomination_recall: record '" + trace.protein_id + "' has no motif ids");
    if (trace.input_nodes == 0 || trace.survivors.empty())
        throw SchemaError("nomination_recall: trace for '" + trace.protein_id + "' is empty");
    const std::set<std::size_t> alive(trace.survivors.begin(), trace.survivors.end());
    std::size_t hit = 0;
    for (auto m : motif_ids)
        if (alive.contains(m)) ++hit;
    NominationRecall out;
    out.raw = static_cast<double>(hit) / static_cast<double>(motif_ids.size());
    const double chance = static_cast<double>(trace.survivors.size()) / static_cast<double>(trace.input_nodes);
    out.enrichment = out.raw / chance;
    return out;
}

} // namespace nclust
