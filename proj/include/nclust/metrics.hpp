#pragma once

#include "nclust/model.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

namespace nclust {

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const std::vector<std::vector<double>>& logits, std::span<const std::size_t> labels);

std::size_t argmax(std::span<const double> row);

inline constexpr std::size_t fmax_grid_steps = 100;

struct FmaxResult {
    double fmax = 0.0;
    double threshold = 0.0;       ///< smallest grid λ attaining fmax
    std::size_t excluded_empty = 0; ///< proteins with an empty truth set, left out of recall
};

/// Protein-centric maximum F-score over λ ∈ {0, 0.01, …, 1}. Each protein's
/// predictions at λ are the classes it scores ≥ λ; classes missing from its
/// score map are never predicted. Precision averages over proteins with at
/// least one prediction, recall over proteins with a non-empty truth set.
FmaxResult fmax(const std::vector<std::map<std::size_t, double>>& scores,
                const std::vector<std::set<std::size_t>>& truth);

/// Dense form: every class of every protein carries a score.
FmaxResult fmax(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<std::uint8_t>>& truth);

struct NominationRecall {
    double raw = 0.0;        ///< |survivors ∩ motif| / |motif|
    double enrichment = 0.0; ///< raw / (N_T / N)
};

NominationRecall nomination_recall(const ScoreTrace& trace, std::span<const std::size_t> motif_ids);

} // namespace nclust
