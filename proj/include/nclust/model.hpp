#pragma once

#include "nclust/diff/graph.hpp"
#include "nclust/diff/params.hpp"
#include "nclust/geometry.hpp"
#include "nclust/protein.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nclust {

enum class AttentionMode { learned, random_baseline };
enum class PoolingMode { neural_clustering, average_pool_baseline };

std::string_view to_string(AttentionMode m);
std::string_view to_string(PoolingMode m);
AttentionMode parse_attention_mode(std::string_view s);
PoolingMode parse_pooling_mode(std::string_view s);

struct ModelConfig {
    std::size_t iterations = 4; ///< T
    std::size_t blocks = 2;     ///< CRE blocks per iteration
    double base_radius = 4.0;   ///< iteration t (1-based) uses t·base_radius
    double omega = 0.4;
    std::vector<std::size_t> channels{128, 256, 512, 1024};
    std::size_t embed_dim = 128;
    std::size_t num_classes = 2;
    TaskKind task = TaskKind::single_label;
    AttentionMode attention = AttentionMode::learned;
    PoolingMode pooling = PoolingMode::neural_clustering;
    std::size_t neighbor_cap = geometry::default_neighbor_cap;
    /// Seeds the random-attention baseline's simplex draws.
    std::uint64_t random_attention_seed = 0;

    double radius(std::size_t t) const { return base_radius * static_cast<double>(t + 1); }
    std::size_t in_width(std::size_t t, std::size_t b) const;
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys throw SchemaError.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Parameter names, fixed by (iteration, block):
///   embed, it{t}.blk{b}.{enc.geom, enc.feat, enc.b1, enc.W2, enc.b2,
///   att.medoid, att.member, att.bias, att.w, skip.W, skip.b},
///   it{t}.cn.{W1, W2, W3}, head.W, head.b.
/// Parameters a mode never reads are not created.
diff::ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Nodes alive at the start of one iteration.
struct IterationState {
    diff::Var features; ///< N_t × C
    std::vector<Vec3> coords;
    std::vector<int> seq_index;
    geometry::LocalFrames frames;
    std::vector<std::size_t> node_ids; ///< rows of the input protein
    std::size_t chain_length = 0;

    std::size_t size() const { return coords.size(); }
};

struct SciResult {
    geometry::NeighborLists lists;
    /// Flattened lists: pair i is (medoid[i], member[i]).
    std::vector<std::size_t> medoid, member;
    /// Symmetric adjacency with self-loops as sorted (row, col) pairs.
    std::vector<std::size_t> adj_row, adj_col;
    std::vector<double> degree;

    std::size_t size() const { return lists.size(); }
    diff::Tensor adjacency() const;
};

SciResult sci(const IterationState& state, double radius, std::size_t cap = geometry::default_neighbor_cap);

/// Rows of pair_feature_dim invariant features, one per (medoid, member) pair.
diff::Tensor pair_features(const IterationState& state, const SciResult& clusters, double radius);

struct CreOutput {
    diff::Var features;  ///< N × C_t, after the skip connection
    diff::Var members;   ///< K × C_t, x_k^n per pair
    diff::Var attention; ///< K × 1, γ per pair
};

/// One CRE block on input features `h` (N × in_width(t, b)). `pair_feats`
/// is the constant K × pair_feature_dim matrix from pair_features().
CreOutput cre_block(diff::Graph& g, const IterationState& state, diff::Var h, const SciResult& clusters,
                    diff::Var pair_feats, diff::ParamSet& params, const ModelConfig& cfg, std::size_t t, std::size_t b,
                    const std::string& record_id = {});

struct Nomination {
    IterationState next;
    std::vector<double> scores;         ///< Φ, empty for average pooling
    std::vector<std::size_t> selected;  ///< rows kept, by descending score
    diff::Var weighted;                 ///< Φ⊙X
    bool clamped = false;               ///< ⌊ω·N⌋ was 0 and one node was kept anyway
};

/// Survivor count for an iteration that starts with n nodes.
std::size_t survivor_count(std::size_t n, double omega);

Nomination cn_nominate(diff::Graph& g, const IterationState& state, diff::Var features, const SciResult& clusters,
                       diff::ParamSet& params, const ModelConfig& cfg, std::size_t t);

/// Uniform windows over the current order, one per survivor.
Nomination average_pool(diff::Graph& g, const IterationState& state, diff::Var features, const ModelConfig& cfg);

struct IterationTrace {
    std::size_t iteration = 0;
    double radius = 0.0;
    std::vector<std::size_t> node_ids;
    std::vector<Vec3> coords;
    std::vector<double> scores;
    std::vector<std::size_t> selected; ///< row indices into node_ids
    bool clamped = false;

    bool operator==(const IterationTrace&) const = default;
};

struct ScoreTrace {
    std::string protein_id;
    std::size_t input_nodes = 0;
    std::vector<IterationTrace> iterations;
    std::vector<std::size_t> survivors; ///< input rows alive after the last iteration
    std::size_t warnings = 0;

    bool operator==(const ScoreTrace&) const = default;
};

nlohmann::json to_json(const ScoreTrace& trace);

struct ForwardResult {
    diff::Var logits; ///< 1 × num_classes
    ScoreTrace trace;
};

/// Absent rows (present_mask false) are removed before anything else.
ForwardResult forward(diff::Graph& g, const ProteinRecord& rec, diff::ParamSet& params, const ModelConfig& cfg);

struct Prediction {
    diff::Tensor logits;
    ScoreTrace trace;
};

Prediction predict(const ProteinRecord& rec, diff::ParamSet& params, const ModelConfig& cfg);

/// Rescales W2 and W3 of each nomination layer, first iteration first, so
/// the mean positive score over `records` equals `target`. Does nothing
/// under average pooling or when no score is positive.
void calibrate_nomination(diff::ParamSet& params, const ModelConfig& cfg, std::span<const ProteinRecord> records,
                          double target = 1.0);

/// Loss for one record under the configured task.
diff::Var record_loss(diff::Var logits, const ProteinRecord& rec, const ModelConfig& cfg);

} // namespace nclust
