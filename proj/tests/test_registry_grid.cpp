// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "grid_fixture.hpp"
#include "molbench/error.hpp"
#include "molbench/registry.hpp"
#include "test_util.hpp"

using namespace molbench;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MetricRecord sample(std::size_t it = 3) {
  return {{"Decoder", "Medium", "D2", it, 4, 6, "tox21_sr_p53", TaskKind::Classification}, 0.4321, 0.75};
}

}  // namespace

TEST(Registry, JsonFieldOrderAndRoundTrip) {
  const auto j = record_to_json(sample(), "2026-01-01T00:00:00Z");
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  const std::vector<std::string> want{"mt", "ms", "ds", "iteration", "mtr_epoch", "ft_epoch",
                                      "task", "task_kind", "val_loss", "test_metric", "timestamp"};
  EXPECT_EQ(keys, want);
  const auto back = record_from_json(j);
  EXPECT_EQ(back.key, sample().key);
  EXPECT_EQ(back.val_loss, 0.4321);
  EXPECT_EQ(back.test_metric, 0.75);
  EXPECT_EQ(j.at("task_kind"), "classification");
}

TEST(Registry, WriterAppendsAndScanToleratesTornTail) {
  const auto dir = test::scratch_dir("registry");
  const auto path = next_registry_path(dir);
  EXPECT_EQ(path.filename(), "registry.jsonl");
  {
    RegistryWriter w(path);
    w.append({sample(0), sample(1)});
    w.append({sample(2)});
  }
  EXPECT_EQ(read_registry(path).size(), 3u);
  EXPECT_EQ(next_registry_path(dir).filename(), "registry-1.jsonl");
  EXPECT_EQ(*latest_registry_path(dir), path);

  const auto whole = slurp(path);
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << "{\"mt\":\"Enc";
  }
  EXPECT_THROW(read_registry(path), DataError);
  const auto scan = scan_registry(path);
  EXPECT_TRUE(scan.torn_tail);
  EXPECT_EQ(scan.records.size(), 3u);
  EXPECT_EQ(scan.valid_bytes, whole.size());
  {
    RegistryWriter w(path, scan.valid_bytes);
    w.append({sample(4)});
  }
  const auto fixed = read_registry(path);
  ASSERT_EQ(fixed.size(), 4u);
  EXPECT_EQ(fixed[3].key.iteration, 4u);

  std::ofstream(path, std::ios::app) << "not json\n";
  try {
    read_registry(path);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos) << e.what();
  }
}

TEST(Registry, StripTimestamps) {
  const auto a = record_to_json(sample(), "2026-01-01T00:00:00Z").dump() + "\n";
  const auto b = record_to_json(sample(), "2027-05-05T10:00:00Z").dump() + "\n";
  EXPECT_NE(a, b);
  EXPECT_EQ(strip_timestamps(a), strip_timestamps(b));
}

TEST(Grid, EnumeratesEighteenConfigsInOrder) {
  auto g = test::tiny_grid({"lipo"});
  const auto cfgs = enumerate_configs(g.spec);
  ASSERT_EQ(cfgs.size(), 18u);
  EXPECT_EQ(g.spec.num_configs(), 18u);
  EXPECT_EQ(cfgs.front().key(), "Encoder_Small_D1");
  EXPECT_EQ(cfgs[1].key(), "Encoder_Small_D2");
  EXPECT_EQ(cfgs[3].key(), "Encoder_Medium_D1");
  EXPECT_EQ(cfgs.back().key(), "EncoderDecoder_Medium_D3");
}

TEST(Grid, SpecValidationAndJson) {
  auto g = test::tiny_grid({"lipo"});
  const auto back = grid_spec_from_json(to_json(g.spec));
  EXPECT_EQ(to_json(back), to_json(g.spec));
  auto bad = g.spec;
  bad.data_sizes[1].name = "D1";
  EXPECT_THROW(validate(bad), UsageError);
  bad = g.spec;
  bad.model_sizes.clear();
  EXPECT_THROW(validate(bad), UsageError);
}

TEST(Grid, ReducedGridRecordCount) {
  auto g = test::tiny_grid({"delaney"});
  g.spec.model_types = {ModelFamily::Encoder};
  g.spec.model_sizes.resize(1);
  g.spec.data_sizes.resize(1);
  g.spec.iterations = 1;
  const auto dir = test::scratch_dir("grid_small");
  const auto res = run_grid(g.spec, g.corpus, g.tasks, g.vocab, {dir});
  const auto rec = read_registry(res.registry);
  ASSERT_EQ(rec.size(), 4u);
  EXPECT_EQ(res.records_written, 4u);
  EXPECT_EQ(rec[0].key.mtr_epoch, 0u);
  EXPECT_EQ(rec[0].key.ft_epoch, 0u);
  EXPECT_EQ(rec[1].key.ft_epoch, 1u);
  EXPECT_EQ(rec[2].key.mtr_epoch, 1u);
  EXPECT_TRUE(fs::exists(dir / "runs" / "Encoder_Small_D1.json"));
}

TEST(Grid, RerunIsIdenticalAndResumeMatches) {
  auto g = test::tiny_grid({"delaney", "bace_classification"});
  g.spec.model_types = {ModelFamily::Encoder, ModelFamily::Decoder};
  g.spec.data_sizes.resize(2);
  g.spec.iterations = 1;
  const auto dir = test::scratch_dir("grid_resume");

  GridRunOptions opt{dir};
  opt.workers = 2;
  const auto first = run_grid(g.spec, g.corpus, g.tasks, g.vocab, opt);
  const auto second = run_grid(g.spec, g.corpus, g.tasks, g.vocab, opt);
  EXPECT_EQ(first.registry.filename(), "registry.jsonl");
  EXPECT_EQ(second.registry.filename(), "registry-1.jsonl");
  EXPECT_EQ(strip_timestamps(slurp(first.registry)), strip_timestamps(slurp(second.registry)));
  EXPECT_EQ(first.configs_total, 8u);
  EXPECT_EQ(read_registry(first.registry).size(), 8u * 2 * 2 * 2);

  const auto rdir = test::scratch_dir("grid_resume_b");
  GridRunOptions crash{rdir};
  crash.max_configs = 3;
  const auto partial = run_grid(g.spec, g.corpus, g.tasks, g.vocab, crash);
  EXPECT_EQ(partial.configs_run, 3u);
  {
    std::ofstream out(partial.registry, std::ios::app | std::ios::binary);
    out << "{\"mt\":\"Decoder\",\"ms\":";
  }
  GridRunOptions resume{rdir};
  resume.resume = true;
  const auto done = run_grid(g.spec, g.corpus, g.tasks, g.vocab, resume);
  EXPECT_EQ(done.registry, partial.registry);
  EXPECT_EQ(done.configs_skipped, 3u);
  EXPECT_EQ(done.configs_run, 5u);
  EXPECT_EQ(strip_timestamps(slurp(done.registry)), strip_timestamps(slurp(first.registry)));
}
