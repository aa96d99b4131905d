// SPDX-License-Identifier: Apache-2.0
#include "molbench/grid.hpp"

#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <omp.h>

#include "molbench/error.hpp"
#include "molbench/registry.hpp"
#include "molbench/rng.hpp"

namespace molbench {

void validate(const GridSpec& s) {
  if (s.model_types.empty() || s.model_sizes.empty() || s.data_sizes.empty())
    throw UsageError("grid needs at least one model type, model size and data size");
  if (s.iterations == 0) throw UsageError("iterations must be positive");
  std::set<std::string> names;
  for (const auto& m : s.model_sizes)
    if (m.name.empty() || !names.insert(m.name).second) throw UsageError("bad or duplicate model size '" + m.name + "'");
  names.clear();
  for (const auto& d : s.data_sizes) {
    if (d.name.empty() || !names.insert(d.name).second) throw UsageError("bad or duplicate data size '" + d.name + "'");
    if (d.rows < 2) throw UsageError("data size " + d.name + " needs at least 2 rows");
  }
  std::set<ModelFamily> fams(s.model_types.begin(), s.model_types.end());
  if (fams.size() != s.model_types.size()) throw UsageError("duplicate model type");
  if (!(s.val_fraction > 0.0 && s.val_fraction < 1.0)) throw UsageError("val_fraction must lie in (0, 1)");
  for (const auto& t : s.tasks) task_info(t);
  validate(s.mtr);
  validate(s.ft);
  if (s.mtr.epochs != s.mtr_epochs || s.ft.epochs != s.ft_epochs) throw UsageError("epoch counts disagree");
}

GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec s;
  try {
    if (j.contains("model_types")) {
      s.model_types.clear();
      for (const auto& t : j.at("model_types")) s.model_types.push_back(parse_family(t.get<std::string>()));
    }
    for (const auto& m : j.at("model_sizes"))
      s.model_sizes.push_back({m.at("name").get<std::string>(), m.value("hidden_size", std::size_t{32}),
                               m.value("intermediate_size", std::size_t{64}), m.value("num_layers", std::size_t{2}),
                               m.value("num_heads", std::size_t{2})});
    for (const auto& d : j.at("data_sizes"))
      s.data_sizes.push_back({d.at("name").get<std::string>(), d.at("rows").get<std::size_t>()});
    s.iterations = j.value("iterations", s.iterations);
    s.mtr_epochs = j.value("mtr_epochs", s.mtr_epochs);
    s.ft_epochs = j.value("ft_epochs", s.ft_epochs);
    s.master_seed = j.value("master_seed", s.master_seed);
    s.ft_head_hidden = j.value("ft_head_hidden", s.ft_head_hidden);
    s.val_fraction = j.value("val_fraction", s.val_fraction);
    if (j.contains("tasks")) s.tasks = j.at("tasks").get<std::vector<std::string>>();
    auto mtr = j.value("mtr", nlohmann::json::object());
    auto ft = j.value("ft", nlohmann::json::object());
    mtr["epochs"] = s.mtr_epochs;
    ft["epochs"] = s.ft_epochs;
    s.mtr = train_config_from_json(mtr, s.mtr);
    s.ft = train_config_from_json(ft, s.ft);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad grid spec: ") + e.what());
  } catch (const DataError& e) {
    throw UsageError(std::string("bad grid spec: ") + e.what());
  }
  validate(s);
  return s;
}

nlohmann::json to_json(const GridSpec& s) {
  nlohmann::json j;
  for (auto f : s.model_types) j["model_types"].push_back(family_name(f));
  for (const auto& m : s.model_sizes)
    j["model_sizes"].push_back({{"name", m.name},
                                {"hidden_size", m.hidden_size},
                                {"intermediate_size", m.intermediate_size},
                                {"num_layers", m.num_layers},
                                {"num_heads", m.num_heads}});
  for (const auto& d : s.data_sizes) j["data_sizes"].push_back({{"name", d.name}, {"rows", d.rows}});
  j["iterations"] = s.iterations;
  j["mtr_epochs"] = s.mtr_epochs;
  j["ft_epochs"] = s.ft_epochs;
  j["master_seed"] = s.master_seed;
  j["ft_head_hidden"] = s.ft_head_hidden;
  j["val_fraction"] = s.val_fraction;
  j["tasks"] = s.tasks;
  j["mtr"] = to_json(s.mtr);
  j["ft"] = to_json(s.ft);
  return j;
}

GridSpec load_grid_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read grid spec " + path.string());
  try {
    return grid_spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

std::string GridConfig::key() const { return std::string(family_name(mt)) + "_" + ms.name + "_" + ds.name; }

std::vector<GridConfig> enumerate_configs(const GridSpec& spec) {
  std::vector<GridConfig> out;
  for (auto mt : spec.model_types)
    for (const auto& ms : spec.model_sizes)
      for (const auto& ds : spec.data_sizes) out.push_back({mt, ms, ds});
  return out;
}

GridAxes grid_axes(const GridSpec& spec, const std::vector<std::string>& task_names) {
  GridAxes a;
  for (auto f : spec.model_types) a.mt.emplace_back(family_name(f));
  for (const auto& m : spec.model_sizes) a.ms.push_back(m.name);
  for (const auto& d : spec.data_sizes) a.ds.push_back(d.name);
  a.tasks = task_names;
  a.iterations = spec.iterations;
  a.mtr_epochs = spec.mtr_epochs;
  a.ft_epochs = spec.ft_epochs;
  return a;
}

namespace {

struct ConfigOutput {
  std::vector<MetricRecord> records;
  nlohmann::json meta;
};

ConfigOutput run_config(const GridSpec& spec, const GridConfig& cfg, const DescriptorTable& corpus,
                        const std::vector<std::size_t>& data_order, const std::vector<TaskDataset>& tasks,
                        const Vocabulary& vocab, const GridRunOptions& opts) {
  const std::string key = cfg.key();
  const std::uint64_t run_seed = derive_seed(spec.master_seed, key);

  DescriptorTable data;
  data.column_names = corpus.column_names;
  data.column_stats = corpus.column_stats;
  data.flagged = corpus.flagged;
  for (std::size_t i = 0; i < cfg.ds.rows; ++i) data.rows.push_back(corpus.rows[data_order[i]]);
  const auto plan = split(data, spec.val_fraction, derive_seed(spec.master_seed, "mtr-split:" + cfg.ds.name));

  ModelConfig mc;
  mc.family = cfg.mt;
  mc.hidden_size = cfg.ms.hidden_size;
  mc.intermediate_size = cfg.ms.intermediate_size;
  mc.num_layers = cfg.ms.num_layers;
  mc.num_heads = cfg.ms.num_heads;
  mc.vocab_size = vocab.size();
  mc.num_properties = data.num_columns();
  validate(mc);

  TrainConfig mtr_cfg = spec.mtr;
  mtr_cfg.seed = run_seed;
  MtrModel model(mc, derive_seed(run_seed, "init"));
  MtrOptions mo;
  mo.run = {std::string(family_name(cfg.mt)), cfg.ms.name, cfg.ds.name, spec.master_seed};
  if (opts.save_checkpoints) mo.checkpoint_dir = opts.out_dir / "checkpoints";
  const auto checkpoints = train_mtr(model, data, plan, mtr_cfg, vocab, mo);

  ConfigOutput out;
  nlohmann::json& meta = out.meta;
  meta["key"] = key;
  meta["run_seed"] = run_seed;
  meta["model"] = to_json(mc);
  meta["param_count"] = model.param_count();
  meta["mtr"] = to_json(mtr_cfg);
  meta["ft"] = to_json(spec.ft);
  meta["ft_head_hidden"] = spec.ft_head_hidden;
  meta["rows"] = {{"total", data.num_rows()}, {"train", plan.train_indices.size()}, {"val", plan.val_indices.size()}};
  for (const auto& ck : checkpoints) {
    meta["mtr_epochs"].push_back({{"epoch", ck.epoch}, {"train_loss", ck.train_loss}, {"val_loss", ck.val_loss}});

    auto mtr = MtrModel::from_checkpoint(ck.payload);
    mtr.backbone().params().set_trainable(false);
    const auto checksum = mtr.backbone().params().checksum();
    for (const auto& task : tasks) {
      const auto features = compute_features(mtr.backbone(), task, vocab);
      TrainConfig ft_cfg = spec.ft;
      ft_cfg.seed = derive_seed(run_seed, "ft:" + task.name + ":mtr" + std::to_string(ck.epoch));
      for (std::size_t it = 0; it < spec.iterations; ++it) {
        const auto recs = train_ft_head(features, ft_cfg, it, spec.ft_head_hidden);
        for (const auto& r : recs) {
          MetricRecord m;
          m.key = {std::string(family_name(cfg.mt)), cfg.ms.name, cfg.ds.name, it, ck.epoch, r.epoch, task.name,
                   task.kind};
          m.val_loss = r.val_loss;
          m.test_metric = r.test_metric;
          out.records.push_back(m);
        }
      }
    }
    if (mtr.backbone().params().checksum() != checksum)
      throw NumericError("backbone of " + key + " changed during fine-tuning");
    meta["backbone_checksums"].push_back(checksum);
  }
  return out;
}

}  // namespace

GridResult run_grid(const GridSpec& spec, const DescriptorTable& corpus, const std::vector<TaskDataset>& tasks,
                    const Vocabulary& vocab, const GridRunOptions& opts) {
  validate(spec);
  if (tasks.empty()) throw UsageError("grid needs at least one task");
  for (const auto& d : spec.data_sizes)
    if (d.rows > corpus.num_rows())
      throw UsageError("data size " + d.name + " wants " + std::to_string(d.rows) + " rows, corpus has " +
                       std::to_string(corpus.num_rows()));
  auto log = [&](const std::string& msg) {
    if (opts.log) opts.log(msg);
  };

  const auto configs = enumerate_configs(spec);
  const std::size_t per_config = tasks.size() * spec.iterations * spec.mtr_epochs * spec.ft_epochs;
  GridResult result;
  result.configs_total = configs.size();

  std::filesystem::create_directories(opts.out_dir / "runs");
  std::vector<bool> done(configs.size(), false);
  std::optional<std::size_t> truncate_to;
  if (opts.resume) {
    if (const auto latest = latest_registry_path(opts.out_dir)) {
      result.registry = *latest;
      const auto scan = scan_registry(*latest);
      std::map<std::string, std::size_t> counts;
      for (const auto& r : scan.records) ++counts[r.key.mt + "_" + r.key.ms + "_" + r.key.ds];
      truncate_to = scan.valid_bytes;
      std::size_t kept = scan.records.size();
      for (std::size_t i = 0; i < scan.records.size(); ++i) {
        const auto& k = scan.records[i].key;
        if (counts[k.mt + "_" + k.ms + "_" + k.ds] != per_config) {
          truncate_to = scan.line_starts[i];
          kept = i;
          break;
        }
      }
      std::set<std::string> complete;
      for (std::size_t i = 0; i < kept; ++i) {
        const auto& k = scan.records[i].key;
        complete.insert(k.mt + "_" + k.ms + "_" + k.ds);
      }
      for (std::size_t c = 0; c < configs.size(); ++c) done[c] = complete.contains(configs[c].key());
      log("resuming " + latest->string());
    }
  }
  if (result.registry.empty()) result.registry = next_registry_path(opts.out_dir);
  RegistryWriter writer(result.registry, truncate_to);

  std::vector<std::size_t> pending;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    if (done[c]) {
      ++result.configs_skipped;
      log("skip " + configs[c].key());
    } else {
      pending.push_back(c);
    }
  }
  if (opts.max_configs && pending.size() > *opts.max_configs) pending.resize(*opts.max_configs);

  std::vector<std::size_t> data_order(corpus.num_rows());
  std::iota(data_order.begin(), data_order.end(), 0);
  {
    Rng rng(derive_seed(spec.master_seed, "data-order"));
    shuffle(data_order, rng);
  }

  std::vector<std::optional<ConfigOutput>> slots(pending.size());
  std::size_t next_commit = 0;
  std::exception_ptr failure;
  const int workers = static_cast<int>(std::max<std::size_t>(opts.workers, 1));

#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (std::size_t p = 0; p < pending.size(); ++p) {
    bool abort = false;
#pragma omp critical(molbench_grid)
    abort = failure != nullptr;
    if (abort) continue;
    const auto& cfg = configs[pending[p]];
    std::optional<ConfigOutput> output;
    try {
      output = run_config(spec, cfg, corpus, data_order, tasks, vocab, opts);
    } catch (...) {
#pragma omp critical(molbench_grid)
      if (!failure) failure = std::current_exception();
    }
    if (!output) continue;
#pragma omp critical(molbench_grid)
    {
      slots[p] = std::move(output);
      try {
        while (next_commit < slots.size() && slots[next_commit] && !failure) {
          auto& s = *slots[next_commit];
          const auto& c = configs[pending[next_commit]];
          std::ofstream(opts.out_dir / "runs" / (c.key() + ".json")) << s.meta.dump(2) << '\n';
          writer.append(s.records);
          result.records_written += s.records.size();
          ++result.configs_run;
          log("committed " + c.key() + " (" + std::to_string(s.records.size()) + " records)");
          slots[next_commit].reset();
          ++next_commit;
        }
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

}  // namespace molbench
