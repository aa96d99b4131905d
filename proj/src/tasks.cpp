// SPDX-License-Identifier: Apache-2.0
#include "molbench/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <curl/curl.h>
#include <zlib.h>

#include "molbench/csv.hpp"
#include "molbench/error.hpp"
#include "molbench/fixtures.hpp"
#include "molbench/rng.hpp"
#include "molbench/smiles_graph.hpp"

namespace molbench {

std::string_view task_kind_name(TaskKind kind) {
  return kind == TaskKind::Regression ? "regression" : "classification";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "regression") return TaskKind::Regression;
  if (text == "classification") return TaskKind::Classification;
  throw DataError("unknown task kind '" + std::string(text) + "'");
}

const std::vector<TaskInfo>& task_registry() {
  static const std::string base = "https://deepchemdata.s3-us-west-1.amazonaws.com/datasets/";
  static const std::vector<TaskInfo> tasks = {
      {"bace_regression", TaskKind::Regression, 1513, base + "bace.csv", "mol", "pIC50"},
      {"delaney", TaskKind::Regression, 1127, base + "delaney-processed.csv", "smiles",
       "measured log solubility in mols per litre"},
      {"lipo", TaskKind::Regression, 4200, base + "Lipophilicity.csv", "smiles", "exp"},
      {"bace_classification", TaskKind::Classification, 1513, base + "bace.csv", "mol", "Class"},
      {"hiv", TaskKind::Classification, 40000, base + "HIV.csv", "smiles", "HIV_active"},
      {"tox21_sr_p53", TaskKind::Classification, 8000, base + "tox21.csv.gz", "smiles", "SR-p53"},
  };
  return tasks;
}

const TaskInfo& task_info(std::string_view name) {
  for (const auto& t : task_registry())
    if (t.name == name) return t;
  throw UsageError("unknown task '" + std::string(name) + "'");
}

namespace {

double checked_label(double value, TaskKind kind, const std::string& where) {
  if (!std::isfinite(value)) throw DataError(where + ": non-finite label");
  if (kind == TaskKind::Classification && value != 0.0 && value != 1.0)
    throw DataError(where + ": classification label " + csv::format_double(value) + " is not 0 or 1");
  return value;
}

std::size_t column_index(const csv::Table& table, const std::string& name, const std::string& source) {
  const auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) throw DataError(source + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - table.header.begin());
}

std::size_t share(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
}

}  // namespace

TaskDataset read_task_csv(const std::filesystem::path& path, std::string name, TaskKind kind) {
  const auto table = csv::read(path);
  const auto source = path.string();
  const auto si = column_index(table, "smiles", source);
  const auto li = column_index(table, "label", source);
  TaskDataset task;
  task.name = std::move(name);
  task.kind = kind;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto where = source + ":" + std::to_string(table.line_numbers[r]);
    task.smiles.push_back(table.rows[r][si]);
    task.labels.push_back(checked_label(csv::parse_double(table.rows[r][li], where), kind, where));
  }
  if (task.smiles.empty()) throw DataError(source + ": no rows");
  return task;
}

void write_task_csv(const TaskDataset& task, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "smiles,label\n";
  for (std::size_t i = 0; i < task.size(); ++i)
    out << csv::escape(task.smiles[i]) << ',' << csv::format_double(task.labels[i]) << '\n';
}

void assign_task_split(TaskDataset& task, std::uint64_t seed) {
  task.train.clear();
  task.val.clear();
  task.test.clear();
  Rng rng(derive_seed(seed, "task-split:" + task.name));
  auto place = [&](std::vector<std::size_t> idx) {
    shuffle(idx, rng);
    const std::size_t n = idx.size();
    std::size_t n_val = share(n, 0.1);
    std::size_t n_test = share(n, 0.1);
    if (n >= 3) {
      n_val = std::max<std::size_t>(n_val, 1);
      n_test = std::max<std::size_t>(n_test, 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_val) task.val.push_back(idx[i]);
      else if (i < n_val + n_test) task.test.push_back(idx[i]);
      else task.train.push_back(idx[i]);
    }
  };
  if (task.kind == TaskKind::Classification) {
    std::vector<std::size_t> neg, pos;
    for (std::size_t i = 0; i < task.size(); ++i) (task.labels[i] > 0.5 ? pos : neg).push_back(i);
    place(std::move(neg));
    place(std::move(pos));
    task.split_policy = "stratified 80/10/10, seed " + std::to_string(seed);
  } else {
    std::vector<std::size_t> all(task.size());
    std::iota(all.begin(), all.end(), 0);
    place(std::move(all));
    task.split_policy = "random 80/10/10, seed " + std::to_string(seed);
  }
  std::sort(task.train.begin(), task.train.end());
  std::sort(task.val.begin(), task.val.end());
  std::sort(task.test.begin(), task.test.end());
}

IngestResult ingest_raw_csv(const TaskInfo& info, std::string_view raw_text) {
  const auto table = csv::parse(raw_text, info.url);
  const auto si = column_index(table, info.smiles_column, info.name);
  const auto li = column_index(table, info.label_column, info.name);
  IngestResult result;
  result.dataset.name = info.name;
  result.dataset.kind = info.kind;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& smiles = table.rows[r][si];
    const auto& cell = table.rows[r][li];
    if (smiles.empty() || cell.empty()) {
      ++result.dropped_rows;
      continue;
    }
    const auto where = info.name + ":" + std::to_string(table.line_numbers[r]);
    result.dataset.smiles.push_back(smiles);
    result.dataset.labels.push_back(checked_label(csv::parse_double(cell, where), info.kind, where));
  }
  const double n = static_cast<double>(result.dataset.size());
  const double expected = static_cast<double>(info.expected_rows);
  if (std::abs(n - expected) > 0.2 * expected)
    result.warnings.push_back(info.name + ": " + std::to_string(result.dataset.size()) +
                              " rows, expected about " + std::to_string(info.expected_rows));
  return result;
}

namespace {

std::size_t on_body(char* data, std::size_t size, std::size_t count, void* user) {
  static_cast<std::string*>(user)->append(data, size * count);
  return size * count;
}

}  // namespace

std::string gunzip(std::string_view bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw DataError("zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::string out;
  char buf[1 << 15];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("gzip stream is corrupt");
    }
    out.append(buf, sizeof buf - zs.avail_out);
  }
  inflateEnd(&zs);
  return out;
}

std::string download_raw(const TaskInfo& info) {
  CURL* curl = curl_easy_init();
  if (!curl) throw DataError("curl init failed");
  std::string body;
  curl_easy_setopt(curl, CURLOPT_URL, info.url.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, on_body);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &body);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  if (rc != CURLE_OK) throw DataError("download of " + info.url + " failed: " + curl_easy_strerror(rc));
  if (info.url.ends_with(".gz")) return gunzip(body);
  return body;
}

void write_task_files(const IngestResult& result, std::uint64_t split_seed, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  TaskDataset ds = result.dataset;
  assign_task_split(ds, split_seed);
  write_task_csv(ds, dir / (ds.name + ".csv"));
  const auto& info = task_info(ds.name);
  nlohmann::ordered_json side;
  side["name"] = ds.name;
  side["kind"] = task_kind_name(ds.kind);
  side["rows"] = ds.size();
  side["expected_rows"] = info.expected_rows;
  side["dropped_rows"] = result.dropped_rows;
  side["source"] = result.source.empty() ? info.url : result.source;
  side["split_policy"] = ds.split_policy;
  side["split_seed"] = split_seed;
  side["split_sizes"] = {ds.train.size(), ds.val.size(), ds.test.size()};
  side["warnings"] = result.warnings;
  std::ofstream out(dir / (ds.name + ".json"));
  if (!out) throw DataError("cannot write sidecar for " + ds.name);
  out << side.dump(2) << '\n';
}

TaskDataset load_task(const std::filesystem::path& dir, const std::string& name) {
  const auto& info = task_info(name);
  std::ifstream in(dir / (name + ".json"));
  if (!in) throw DataError("missing task sidecar " + (dir / (name + ".json")).string());
  std::uint64_t seed = 0;
  try {
    seed = nlohmann::json::parse(in).at("split_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(name + ".json: " + e.what());
  }
  auto task = read_task_csv(dir / (name + ".csv"), name, info.kind);
  assign_task_split(task, seed);
  return task;
}

TaskDataset fixture_task(const TaskInfo& info, std::size_t rows, std::uint64_t seed) {
  const auto task_seed = derive_seed(seed, "fixture:" + info.name);
  TaskDataset task;
  task.name = info.name;
  task.kind = info.kind;
  task.smiles = synthetic_smiles(rows, task_seed);
  Rng noise(mix_seed(task_seed, 1));
  std::vector<double> score;
  for (const auto& s : task.smiles) {
    const auto d = builtin_descriptors(s);
    const double w = static_cast<double>(task_seed % 7) / 7.0;
    score.push_back(0.01 * d[3] + (1.0 - w) * d[2] - 0.5 * d[5] + w * d[4] * 0.3 + 0.1 * noise.normal());
  }
  if (info.kind == TaskKind::Regression) {
    task.labels = score;
  } else {
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
    task.labels.assign(rows, 0.0);
    for (std::size_t k = rows / 2; k < rows; ++k) task.labels[order[k]] = 1.0;
  }
  return task;
}

}  // namespace molbench
