// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molbench/checkpoint.hpp"
#include "molbench/curation.hpp"
#include "molbench/model.hpp"
#include "molbench/tasks.hpp"

namespace molbench {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 7;
  double peak_lr = 1e-4;
  std::size_t warmup_epochs = 1;
  double eta_min = 0.0;
  std::uint64_t seed = 0;
  AdamWConfig adamw;
};

/// Throws UsageError unless warmup_epochs < epochs, peak_lr > eta_min >= 0
/// and batch_size > 0.
void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

struct LrSchedule {
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;
  double peak = 0.0;
  double eta_min = 0.0;
};

LrSchedule make_schedule(const TrainConfig& config, std::size_t steps_per_epoch);

/// Linear warmup to peak at warmup_steps (step 0 already at peak/warmup),
/// then cosine annealing to eta_min at total_steps.
double lr_at(const LrSchedule& schedule, std::size_t step);

struct AdamWState {
  ad::Tensor m;
  ad::Tensor v;
  std::size_t step = 0;
};

/// One decoupled-weight-decay Adam update. Throws NumericError naming the
/// parameter on a non-finite gradient. Frozen parameters are left alone.
void adamw_step(ad::Parameter& param, AdamWState& state, double lr, const AdamWConfig& config);

/// Per-parameter AdamW states for a fixed parameter list.
class AdamW {
 public:
  AdamW(std::vector<ad::Parameter*> params, AdamWConfig config);
  void step(double lr);
  void zero_grad();

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<AdamWState> states_;
  AdamWConfig config_;
};

struct RunIdentity {
  std::string mt;
  std::string ms;
  std::string ds;
  std::uint64_t seed = 0;
};

/// `{mt}_{ms}_{ds}_seed{n}_epoch{k}`
std::string checkpoint_file_name(const RunIdentity& run, std::size_t epoch);

struct EpochCheckpoint {
  RunIdentity run;
  std::size_t epoch = 0;
  Checkpoint payload;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct MtrOptions {
  RunIdentity run;
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Called after each epoch's validation pass.
  std::function<void(const EpochCheckpoint&)> on_epoch;
};

/// Masked L1 pre-training. Per epoch: shuffle with epoch_permutation, step
/// AdamW on the warmup/cosine schedule per batch (the last partial batch is
/// kept), then a full validation pass and a checkpoint. Throws NumericError
/// with step, lr and batch rows on a non-finite loss.
std::vector<EpochCheckpoint> train_mtr(MtrModel& model, const DescriptorTable& table, const SplitPlan& split,
                                       const TrainConfig& config, const Vocabulary& vocab,
                                       const MtrOptions& options = {});

/// Mean masked L1 of model predictions over the given rows.
double mtr_loss(MtrModel& model, const DescriptorTable& table, std::span<const std::size_t> rows,
                const std::vector<EncodedSequence>& encoded, std::size_t batch_size);

struct FtEpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double test_metric = 0.0;  // RMSE or AUC-ROC
};

/// Pooled backbone outputs for each split of a task. Valid because the
/// backbone is frozen and the forward pass is deterministic.
struct FrozenFeatures {
  TaskKind kind = TaskKind::Regression;
  ad::Tensor train, val, test;
  std::vector<double> train_labels, val_labels, test_labels;
};

FrozenFeatures compute_features(Backbone& backbone, const TaskDataset& task, const Vocabulary& vocab);

/// Head-only fine-tuning on precomputed features: L1 loss and RMSE for
/// regression, BCE-with-logits and AUC-ROC for classification. The
/// iteration index only changes the head-initialization and shuffle seeds.
std::vector<FtEpochRecord> train_ft_head(const FrozenFeatures& features, const TrainConfig& config,
                                         std::size_t iteration, std::size_t head_hidden = 0,
                                         FtHead* trained_head = nullptr);

/// Full fine-tuning run from an MTR checkpoint.
std::vector<FtEpochRecord> train_ft(const Checkpoint& checkpoint, const TaskDataset& task, TaskKind kind,
                                    const TrainConfig& config, std::size_t iteration, const Vocabulary& vocab,
                                    std::size_t head_hidden = 0);

}  // namespace molbench
