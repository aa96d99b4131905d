// SPDX-License-Identifier: Apache-2.0
// molbench: curate, fetch-tasks, pretrain, finetune, grid, report.

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "molbench/checkpoint.hpp"
#include "molbench/curation.hpp"
#include "molbench/error.hpp"
#include "molbench/fixtures.hpp"
#include "molbench/grid.hpp"
#include "molbench/kernels.hpp"
#include "molbench/registry.hpp"
#include "molbench/rng.hpp"
#include "molbench/report.hpp"
#include "molbench/tasks.hpp"
#include "molbench/train.hpp"

namespace fs = std::filesystem;
using namespace molbench;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = 1;
  bool resume = false;
  bool fixtures = false;
  bool partial = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> task_names(const std::vector<std::string>& requested) {
  if (!requested.empty()) {
    for (const auto& t : requested) task_info(t);
    return requested;
  }
  std::vector<std::string> all;
  for (const auto& t : task_registry()) all.push_back(t.name);
  return all;
}

GridSpec grid_spec(const Globals& g) {
  if (g.config.empty()) throw UsageError("--config <grid spec> is required");
  auto spec = load_grid_spec(g.config);
  if (g.seed_set) spec.master_seed = g.seed;
  return spec;
}

Vocabulary corpus_vocab(const DescriptorTable& corpus, const std::vector<TaskDataset>& tasks) {
  std::vector<std::string> all;
  for (const auto& r : corpus.rows) all.push_back(r.smiles);
  for (const auto& t : tasks) all.insert(all.end(), t.smiles.begin(), t.smiles.end());
  return build_vocab(all);
}

const SizeSpec& find_size(const GridSpec& spec, const std::string& name) {
  for (const auto& s : spec.model_sizes)
    if (s.name == name) return s;
  throw UsageError("model size '" + name + "' is not in the grid spec");
}

// --- curate ---------------------------------------------------------------

struct CurateArgs {
  std::string input, descriptors, out;
  std::size_t synthetic = 0;
  double lo_q = 0.001, hi_q = 0.999;
  bool no_mask = false, no_prune = false;
};

int cmd_curate(const CurateArgs& a, const Globals& g) {
  const int sources = !a.input.empty() + !a.descriptors.empty() + (a.synthetic > 0);
  if (sources != 1) throw UsageError("give exactly one of --input, --descriptors, --synthetic");
  CurationConfig cfg;
  cfg.lo_q = a.lo_q;
  cfg.hi_q = a.hi_q;
  cfg.mask_outliers = !a.no_mask;
  cfg.prune = !a.no_prune;
  if (!(cfg.lo_q >= 0.0 && cfg.lo_q < cfg.hi_q && cfg.hi_q <= 1.0))
    throw UsageError("quantiles must satisfy 0 <= lo < hi <= 1");
  fs::create_directories(a.out);

  CurationResult res;
  if (!a.descriptors.empty()) {
    res = curate_table(read_descriptor_csv(a.descriptors), cfg);
  } else {
    std::vector<std::string> corpus;
    if (a.synthetic > 0) {
      corpus = synthetic_smiles(a.synthetic, g.seed);
      std::string text;
      for (const auto& s : corpus) text += s + "\n";
      write_text(fs::path(a.out) / "corpus.smi", text);
    } else {
      corpus = read_smiles_file(a.input);
    }
    res = curate_smiles(corpus, cfg);
  }
  const fs::path out(a.out);
  write_descriptor_csv(res.table, out / "curated.csv");
  write_text(out / "stats.json", stats_to_json(res.table).dump(2) + "\n");
  write_text(out / "curation_report.json", res.report.to_json().dump(2) + "\n");
  write_text(out / "curation_report.txt", res.report.to_text());
  std::cout << res.report.to_text();
  return 0;
}

// --- fetch-tasks ----------------------------------------------------------

struct FetchArgs {
  std::string out = "data/tasks";
  std::string source_dir;
  std::vector<std::string> tasks;
  std::size_t rows = 200;
};

std::string read_local_raw(const TaskInfo& info, const fs::path& dir) {
  auto file = dir / fs::path(info.url).filename();
  const bool gz = file.extension() == ".gz";
  if (gz && !fs::exists(file)) return read_local_raw({info.name, info.kind, 0, info.url.substr(0, info.url.size() - 3), "", ""}, dir);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("missing raw file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return gz ? gunzip(ss.str()) : ss.str();
}

int cmd_fetch(const FetchArgs& a, const Globals& g) {
  std::map<std::string, std::string> raw_cache;
  for (const auto& name : task_names(a.tasks)) {
    const auto& info = task_info(name);
    IngestResult res;
    if (g.fixtures) {
      if (a.rows < 32) throw UsageError("fixture tasks need at least 32 rows");
      res.dataset = fixture_task(info, a.rows, g.seed);
      res.source = "synthetic fixture, seed " + std::to_string(g.seed);
    } else {
      const std::string source = info.url;
      if (!raw_cache.contains(source)) {
        if (!a.source_dir.empty()) {
          raw_cache[source] = read_local_raw(info, a.source_dir);
        } else {
          std::cerr << "downloading " << info.url << "\n";
          raw_cache[source] = download_raw(info);
        }
      }
      res = ingest_raw_csv(info, raw_cache[source]);
      res.source = a.source_dir.empty() ? info.url : (fs::path(a.source_dir) / fs::path(info.url).filename()).string();
    }
    write_task_files(res, g.seed, a.out);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << name << ": " << res.dataset.size() << " rows (expected about " << info.expected_rows << ")\n";
  }
  return 0;
}

// --- pretrain -------------------------------------------------------------

struct PretrainArgs {
  std::string data, out, family = "Encoder", size = "Small";
  std::size_t rows = 0;
};

int cmd_pretrain(const PretrainArgs& a, const Globals& g) {
  const auto spec = grid_spec(g);
  const auto table = read_descriptor_csv(a.data);
  const auto& size = find_size(spec, a.size);
  const auto family = parse_family(a.family);
  const std::size_t rows = a.rows ? a.rows : table.num_rows();
  if (rows > table.num_rows()) throw UsageError("--rows exceeds the curated table");

  DescriptorTable data = table;
  data.rows.resize(rows);
  const auto vocab = corpus_vocab(data, {});
  const fs::path out(a.out);
  fs::create_directories(out);
  vocab.save(out / "vocab.txt");

  ModelConfig mc{family, size.hidden_size, size.intermediate_size, size.num_layers, size.num_heads,
                 vocab.size(), kMaxSequenceLength, data.num_columns()};
  validate(mc);
  const std::string ds = "N" + std::to_string(rows);
  const std::uint64_t run_seed = derive_seed(spec.master_seed, std::string(family_name(family)) + "_" + size.name + "_" + ds);
  TrainConfig cfg = spec.mtr;
  cfg.seed = run_seed;
  MtrModel model(mc, derive_seed(run_seed, "init"));
  MtrOptions opts;
  opts.run = {std::string(family_name(family)), size.name, ds, spec.master_seed};
  opts.checkpoint_dir = out / "checkpoints";
  opts.on_epoch = [](const EpochCheckpoint& ck) {
    std::cout << "epoch " << ck.epoch << "  train " << ck.train_loss << "  val " << ck.val_loss << "\n";
  };
  train_mtr(model, data, split(data, spec.val_fraction, derive_seed(spec.master_seed, "mtr-split:" + ds)), cfg,
            vocab, opts);
  return 0;
}

// --- finetune -------------------------------------------------------------

struct FinetuneArgs {
  std::string checkpoint, vocab, tasks_dir = "data/tasks", task, out;
  std::size_t iteration = 0;
};

int cmd_finetune(const FinetuneArgs& a, const Globals& g) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto vocab = Vocabulary::load(a.vocab);
  const auto task = load_task(a.tasks_dir, a.task);
  TrainConfig cfg = g.config.empty() ? GridSpec{}.ft : grid_spec(g).ft;
  cfg.seed = g.seed;
  const auto recs = train_ft(ckpt, task, task.kind, cfg, a.iteration, vocab);
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::app);
    if (!file) throw DataError("cannot open " + a.out);
    os = &file;
  }
  const auto& meta = ckpt.meta;
  for (const auto& r : recs) {
    MetricRecord m;
    m.key = {meta.value("mt", "?"), meta.value("ms", "?"), meta.value("ds", "?"), a.iteration,
             meta.value("epoch", std::size_t{0}), r.epoch, task.name, task.kind};
    m.val_loss = r.val_loss;
    m.test_metric = r.test_metric;
    *os << record_to_json(m, utc_timestamp()).dump() << "\n";
  }
  return 0;
}

// --- grid -----------------------------------------------------------------

struct GridArgs {
  std::string data, tasks_dir = "data/tasks", out = "runs";
  bool save_checkpoints = false;
  std::size_t max_configs = 0;
};

int cmd_grid(const GridArgs& a, const Globals& g) {
  const auto spec = grid_spec(g);
  const auto corpus = read_descriptor_csv(a.data);
  std::vector<TaskDataset> tasks;
  for (const auto& name : task_names(spec.tasks)) tasks.push_back(load_task(a.tasks_dir, name));
  const auto vocab = corpus_vocab(corpus, tasks);
  fs::create_directories(a.out);
  vocab.save(fs::path(a.out) / "vocab.txt");
  write_text(fs::path(a.out) / "grid_spec.json", to_json(spec).dump(2) + "\n");

  GridRunOptions opts;
  opts.out_dir = a.out;
  opts.resume = g.resume;
  opts.workers = g.workers;
  opts.save_checkpoints = a.save_checkpoints;
  if (a.max_configs) opts.max_configs = a.max_configs;
  opts.log = [](const std::string& m) { std::cerr << m << "\n"; };
  const auto res = run_grid(spec, corpus, tasks, vocab, opts);
  std::cout << "registry " << res.registry.string() << ": " << res.configs_run << " configurations run, "
            << res.configs_skipped << " skipped of " << res.configs_total << ", " << res.records_written
            << " records written\n";
  return 0;
}

// --- report ---------------------------------------------------------------

struct ReportArgs {
  std::string registry, out = "report", es_mode = "mean";
};

int cmd_report(const ReportArgs& a, const Globals& g) {
  if (a.registry.empty()) throw UsageError("--registry is required");
  if (a.es_mode != "mean" && a.es_mode != "sum") throw UsageError("--es-mode is mean or sum");
  const auto records = read_registry(a.registry);
  GridAxes axes;
  if (!g.config.empty()) {
    const auto spec = grid_spec(g);
    std::set<std::string> seen;
    for (const auto& r : records) seen.insert(r.key.task);
    axes = grid_axes(spec, spec.tasks.empty() ? std::vector<std::string>(seen.begin(), seen.end()) : spec.tasks);
  }
  const auto best = select_best(records, axes, g.partial);
  const auto files = write_reports(best, a.out, a.es_mode == "mean" ? EsMode::Mean : EsMode::Sum, g.partial);
  std::map<std::string, std::size_t> per_task;
  for (const auto& r : best) ++per_task[r.key.task];
  std::cout << records.size() << " records, " << best.size() << " selected\n";
  for (const auto& [task, n] : per_task) std::cout << "  " << task << ": " << n << " best models\n";
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"molbench: transformer-family benchmarking on SMILES property regression"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "grid spec JSON");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { g.seed = s, g.seed_set = true; }, "master seed");
  app.add_option("--workers", g.workers, "concurrent grid configurations")->check(CLI::PositiveNumber);
  app.add_flag("--resume", g.resume, "skip configurations already in the latest registry");
  app.add_flag("--fixtures", g.fixtures, "use generated stand-in task data");
  app.add_flag("--partial", g.partial, "report on an incomplete grid");

  CurateArgs ca;
  auto* curate = app.add_subcommand("curate", "featurize, dedup, mask outliers, prune and normalize");
  curate->add_option("--input", ca.input, "SMILES file, one per line");
  curate->add_option("--descriptors", ca.descriptors, "CSV with smiles and descriptor columns");
  curate->add_option("--synthetic", ca.synthetic, "generate a synthetic corpus of this size");
  curate->add_option("--out", ca.out, "output directory")->required();
  curate->add_option("--lo-q", ca.lo_q, "lower outlier quantile");
  curate->add_option("--hi-q", ca.hi_q, "upper outlier quantile");
  curate->add_flag("--no-mask", ca.no_mask, "skip outlier masking");
  curate->add_flag("--no-prune", ca.no_prune, "skip column pruning");

  FetchArgs fa;
  auto* fetch = app.add_subcommand("fetch-tasks", "download or generate the fine-tuning tasks");
  fetch->add_option("--out", fa.out, "task directory");
  fetch->add_option("--source-dir", fa.source_dir, "ingest raw benchmark CSVs from here instead of downloading");
  fetch->add_option("--tasks", fa.tasks, "subset of task names");
  fetch->add_option("--rows", fa.rows, "rows per fixture task");

  PretrainArgs pa;
  auto* pretrain = app.add_subcommand("pretrain", "one MTR pre-training run");
  pretrain->add_option("--data", pa.data, "curated descriptor CSV")->required();
  pretrain->add_option("--out", pa.out, "output directory")->required();
  pretrain->add_option("--family", pa.family, "Encoder, Decoder or EncoderDecoder");
  pretrain->add_option("--size", pa.size, "model size name from the grid spec");
  pretrain->add_option("--rows", pa.rows, "use the first N curated rows");

  FinetuneArgs fta;
  auto* finetune = app.add_subcommand("finetune", "fine-tune a head on one checkpoint");
  finetune->add_option("--checkpoint", fta.checkpoint, "MTR checkpoint file")->required();
  finetune->add_option("--vocab", fta.vocab, "vocabulary file")->required();
  finetune->add_option("--task", fta.task, "task name")->required();
  finetune->add_option("--tasks-dir", fta.tasks_dir, "task directory");
  finetune->add_option("--iteration", fta.iteration, "replicate index");
  finetune->add_option("--out", fta.out, "append records to this JSONL file");

  GridArgs ga;
  auto* grid = app.add_subcommand("grid", "run the full MT x MS x DS grid");
  grid->add_option("--data", ga.data, "curated descriptor CSV")->required();
  grid->add_option("--tasks-dir", ga.tasks_dir, "task directory");
  grid->add_option("--out", ga.out, "run directory");
  grid->add_flag("--save-checkpoints", ga.save_checkpoints, "write every MTR checkpoint");
  grid->add_option("--max-configs", ga.max_configs, "stop after this many configurations")->group("");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "best-model selection and TES/STD tables");
  report->add_option("--registry", ra.registry, "registry JSONL")->required();
  report->add_option("--out", ra.out, "report directory");
  report->add_option("--es-mode", ra.es_mode, "mean or sum");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*curate) return cmd_curate(ca, g);
    if (*fetch) return cmd_fetch(fa, g);
    if (*pretrain) return cmd_pretrain(pa, g);
    if (*finetune) return cmd_finetune(fta, g);
    if (*grid) return cmd_grid(ga, g);
    if (*report) return cmd_report(ra, g);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
