// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molbench/tensor.hpp"

namespace molbench {

struct NamedTensor {
  std::string name;
  ad::Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Parameter container. On disk:
///   8-byte magic "MOLBCKPT", u32 LE version, u64 LE header length,
///   UTF-8 JSON header {"config", "meta", "tensors": [{name, shape, offset}]},
///   then every tensor's values as little-endian IEEE-754 binary64.
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const ad::Tensor& tensor(std::string_view name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace molbench
