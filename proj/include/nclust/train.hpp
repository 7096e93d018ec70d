#pragma once

#include "nclust/diff/checkpoint.hpp"
#include "nclust/metrics.hpp"
#include "nclust/model.hpp"
#include "nclust/protein.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nclust {

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 5e-4;
    std::size_t batch_size = 8;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    bool use_augment = false;
    AugmentConfig augment;
    std::size_t eval_every = 1;
    /// Stop after an evaluation whose clean train accuracy reaches this
    /// value; 0 disables the stop.
    double stop_at_train_accuracy = 0.0;
    /// Global gradient-norm clip applied before each step; 0 disables it.
    double clip_norm = 0.0;
    /// Leading train records used to calibrate nomination scores before
    /// the first step; 0 skips calibration.
    std::size_t calibration_records = 64;
    /// Adds wall-clock per prediction to evaluation reports. Off by default
    /// so reports stay reproducible byte for byte.
    bool timing = false;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EvalReport {
    std::size_t proteins = 0;
    std::optional<double> accuracy;       ///< single-label
    std::optional<FmaxResult> fmax;       ///< multi-label
    std::optional<NominationRecall> nomination; ///< mean over records carrying motif ids
    std::vector<double> mean_survivors;   ///< mean node count entering each iteration, then after the last
    std::optional<double> seconds_per_prediction;
    double mean_loss = 0.0;

    /// accuracy or F_max, whichever the task defines.
    double primary() const;
};

nlohmann::json to_json(const EvalReport& r);

struct EvalPoint {
    std::size_t epoch = 0; ///< 1-based
    double train_metric = 0.0;
    std::optional<double> val_metric;
};

struct MetricReport {
    std::string attention_mode;
    std::string pooling_mode;
    std::vector<double> epoch_loss;
    std::vector<EvalPoint> evals;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    std::optional<std::size_t> target_reached_epoch;
    EvalReport train_eval; ///< clean pass with the returned parameters
    std::optional<EvalReport> val_eval;
};

nlohmann::json to_json(const MetricReport& r);

struct TrainResult {
    diff::ParamSet params; ///< best-validation parameters, or the last ones without a validation set
    MetricReport report;
};

/// Predictions for every record plus the task metric.
EvalReport evaluate(const Dataset& data, diff::ParamSet& params, const ModelConfig& cfg, bool timing = false,
                    std::vector<Prediction>* predictions = nullptr);

/// Seed handed to init_params by train().
std::uint64_t model_init_seed(std::uint64_t train_seed);

/// Parameters train() starts from: init_params with model_init_seed, then
/// nomination calibration on the leading train records.
diff::ParamSet initial_params(const Dataset& train_set, const ModelConfig& model, const TrainConfig& cfg);

/// Mini-batch SGD with per-record graphs and gradient accumulation.
TrainResult train(const Dataset& train_set, const Dataset* val_set, const ModelConfig& model, const TrainConfig& cfg);

/// Model config plus parameters in one checkpoint.
diff::Checkpoint make_checkpoint(const ModelConfig& model, const diff::ParamSet& params);
/// Restores the model config from metadata and validates parameter names and shapes.
std::pair<ModelConfig, diff::ParamSet> restore_checkpoint(const diff::Checkpoint& ckpt);

struct SweepGrid {
    std::vector<double> radius;
    std::vector<double> omega;
    std::vector<std::size_t> iterations;
    std::vector<double> drop; ///< missing-coordinate fraction u
    std::vector<AttentionMode> attention;
    std::vector<PoolingMode> pooling;
};

struct SweepCell {
    std::size_t index = 0;
    double radius = 0.0;
    double omega = 0.0;
    std::size_t iterations = 0;
    double drop = 0.0;
    AttentionMode attention = AttentionMode::learned;
    PoolingMode pooling = PoolingMode::neural_clustering;
};

struct SweepRow {
    SweepCell cell;
    bool ok = false;
    std::string error;
    MetricReport report;
    EvalReport test;
};

/// Cartesian product in the member order above; empty lists take the
/// base config's value.
std::vector<SweepCell> expand_grid(const SweepGrid& grid, const ModelConfig& base);

/// Base model config with one cell's overrides. Channel lists are cut or
/// extended with their last width when T changes.
ModelConfig cell_model(const ModelConfig& base, const SweepCell& cell);

/// One train + test evaluation per cell. Every cell uses the same train
/// seed; a failing cell is recorded and the sweep moves on. Up to `jobs`
/// cells run at once.
std::vector<SweepRow> sweep(const SweepGrid& grid, const Dataset& train_set, const Dataset& test_set,
                            const ModelConfig& base, const TrainConfig& cfg, std::size_t jobs = 1);

std::string sweep_csv(const std::vector<SweepRow>& rows);

} // namespace nclust
