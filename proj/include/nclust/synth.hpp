#pragma once

#include "nclust/protein.hpp"
#include "nclust/rng.hpp"

#include <cstddef>
#include <vector>

namespace nclust {

struct SynthConfig {
    std::size_t num_proteins = 200;
    std::size_t chain_min = 40;
    std::size_t chain_max = 60;
    std::size_t num_classes = 4;
    std::size_t motif_size = 6;
    /// Per-residue Gaussian jitter (Å) applied to each implanted motif copy.
    double noise = 0.0;

    void validate() const;
};

/// One rigid constellation: residue types plus centered local coordinates.
struct MotifTemplate {
    std::vector<int> types;
    std::vector<Vec3> coords;
};

/// Templates are drawn first from `rng`, then proteins in order. Protein i
/// carries template i % num_classes, which is also its class label.
struct SynthResult {
    Dataset dataset;
    std::vector<MotifTemplate> templates;
};

SynthResult synth_motif_dataset_full(const SynthConfig& cfg, Rng& rng);
Dataset synth_motif_dataset(const SynthConfig& cfg, Rng& rng);

/// Random chain with 3.8 Å steps, bond-angle limits and soft clash
/// avoidance, pulled gently toward its own centroid.
std::vector<Vec3> random_compact_chain(std::size_t n, Rng& rng);

} // namespace nclust
