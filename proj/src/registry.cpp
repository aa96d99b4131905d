// SPDX-License-Identifier: Apache-2.0
#include "molbench/registry.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "molbench/error.hpp"

namespace molbench {

nlohmann::ordered_json record_to_json(const MetricRecord& r, const std::optional<std::string>& timestamp) {
  nlohmann::ordered_json j;
  j["mt"] = r.key.mt;
  j["ms"] = r.key.ms;
  j["ds"] = r.key.ds;
  j["iteration"] = r.key.iteration;
  j["mtr_epoch"] = r.key.mtr_epoch;
  j["ft_epoch"] = r.key.ft_epoch;
  j["task"] = r.key.task;
  j["task_kind"] = task_kind_name(r.key.task_kind);
  j["val_loss"] = r.val_loss;
  j["test_metric"] = r.test_metric;
  if (timestamp) j["timestamp"] = *timestamp;
  return j;
}

MetricRecord record_from_json(const nlohmann::json& j) {
  MetricRecord r;
  try {
    r.key.mt = j.at("mt").get<std::string>();
    r.key.ms = j.at("ms").get<std::string>();
    r.key.ds = j.at("ds").get<std::string>();
    r.key.iteration = j.at("iteration").get<std::size_t>();
    r.key.mtr_epoch = j.at("mtr_epoch").get<std::size_t>();
    r.key.ft_epoch = j.at("ft_epoch").get<std::size_t>();
    r.key.task = j.at("task").get<std::string>();
    r.key.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
    r.val_loss = j.at("val_loss").get<double>();
    r.test_metric = j.at("test_metric").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad registry record: ") + e.what());
  }
  return r;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RegistryScan scan_registry(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  RegistryScan scan;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) {
      scan.torn_tail = true;
      break;
    }
    const std::string_view line(text.data() + pos, nl - pos);
    if (!line.empty()) {
      try {
        scan.records.push_back(record_from_json(nlohmann::json::parse(line)));
        scan.line_starts.push_back(pos);
      } catch (const std::exception& e) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    pos = nl + 1;
    scan.valid_bytes = pos;
  }
  return scan;
}

std::vector<MetricRecord> read_registry(const std::filesystem::path& path) {
  auto scan = scan_registry(path);
  if (scan.torn_tail) throw DataError(path.string() + ": last line is incomplete");
  return std::move(scan.records);
}

std::filesystem::path next_registry_path(const std::filesystem::path& dir) {
  auto p = dir / "registry.jsonl";
  for (std::size_t k = 1; std::filesystem::exists(p); ++k) p = dir / ("registry-" + std::to_string(k) + ".jsonl");
  return p;
}

std::optional<std::filesystem::path> latest_registry_path(const std::filesystem::path& dir) {
  std::optional<std::filesystem::path> last;
  auto p = dir / "registry.jsonl";
  for (std::size_t k = 1; std::filesystem::exists(p); ++k) {
    last = p;
    p = dir / ("registry-" + std::to_string(k) + ".jsonl");
  }
  return last;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RegistryWriter::RegistryWriter(const std::filesystem::path& path, std::optional<std::size_t> truncate_to)
    : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (truncate_to && std::filesystem::exists(path) && std::filesystem::file_size(path) > *truncate_to)
    std::filesystem::resize_file(path, *truncate_to);
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw DataError("cannot open registry " + path.string());
}

void RegistryWriter::append(const std::vector<MetricRecord>& records) {
  const auto ts = utc_timestamp();
  std::string chunk;
  for (const auto& r : records) chunk += record_to_json(r, ts).dump() + '\n';
  out_ << chunk;
  out_.flush();
  if (!out_) throw DataError("write to " + path_.string() + " failed");
}

std::string strip_timestamps(const std::string& jsonl) {
  std::string out;
  std::istringstream in(jsonl);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::ordered_json::parse(line);
    j.erase("timestamp");
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace molbench
