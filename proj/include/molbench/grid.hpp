// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molbench/curation.hpp"
#include "molbench/metrics.hpp"
#include "molbench/model.hpp"
#include "molbench/tasks.hpp"
#include "molbench/train.hpp"

namespace molbench {

struct SizeSpec {
  std::string name;
  std::size_t hidden_size = 32;
  std::size_t intermediate_size = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
};

struct DataSize {
  std::string name;
  std::size_t rows = 0;
};

struct GridSpec {
  std::vector<ModelFamily> model_types{ModelFamily::Encoder, ModelFamily::Decoder, ModelFamily::EncoderDecoder};
  std::vector<SizeSpec> model_sizes;
  std::vector<DataSize> data_sizes;
  std::size_t iterations = 5;
  std::size_t mtr_epochs = 7;
  std::size_t ft_epochs = 7;
  std::uint64_t master_seed = 0;
  TrainConfig mtr{};
  TrainConfig ft{64, 7, 1e-2, 1, 0.0, 0, {}};
  std::size_t ft_head_hidden = 0;
  std::vector<std::string> tasks;  // empty: every registered task
  double val_fraction = 0.05;

  std::size_t num_configs() const { return model_types.size() * model_sizes.size() * data_sizes.size(); }
};

/// Throws UsageError on empty axes, duplicate names or bad schedules.
void validate(const GridSpec& spec);
GridSpec grid_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GridSpec& spec);
GridSpec load_grid_spec(const std::filesystem::path& path);

struct GridConfig {
  ModelFamily mt;
  SizeSpec ms;
  DataSize ds;
  std::string key() const;  // "Encoder_Small_D1"
};

/// (mt, ms, ds) in canonical order.
std::vector<GridConfig> enumerate_configs(const GridSpec& spec);

/// Axes a complete registry of this spec covers.
GridAxes grid_axes(const GridSpec& spec, const std::vector<std::string>& task_names);

struct GridRunOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  std::size_t workers = 1;
  bool save_checkpoints = false;
  /// Stop after committing this many configurations (simulates a crash).
  std::optional<std::size_t> max_configs;
  std::function<void(const std::string&)> log;
};

struct GridResult {
  std::filesystem::path registry;
  std::size_t configs_total = 0;
  std::size_t configs_skipped = 0;
  std::size_t configs_run = 0;
  std::size_t records_written = 0;
};

/// For every configuration: one MTR run over a nested prefix of the
/// shuffled corpus, then every checkpoint x task x iteration fine-tuned.
/// Configurations run concurrently; each commits its records to the
/// registry as one block, in canonical order. With resume, completed
/// configurations in the latest registry are skipped and a torn tail is cut.
GridResult run_grid(const GridSpec& spec, const DescriptorTable& corpus, const std::vector<TaskDataset>& tasks,
                    const Vocabulary& vocab, const GridRunOptions& options);

}  // namespace molbench
