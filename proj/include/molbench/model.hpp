// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molbench/autodiff.hpp"
#include "molbench/checkpoint.hpp"
#include "molbench/tokenizer.hpp"

namespace molbench {

struct ModelConfig {
  ModelFamily family = ModelFamily::Encoder;
  std::size_t hidden_size = 32;
  std::size_t intermediate_size = 64;
  std::size_t num_layers = 2;  // per stack for EncoderDecoder
  std::size_t num_heads = 2;
  std::size_t vocab_size = 64;
  std::size_t max_positions = kMaxSequenceLength;
  std::size_t num_properties = 8;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Throws UsageError on non-positive sizes, a head count that does not
/// divide the width, an odd rotary head dimension or max_positions != 512.
void validate(const ModelConfig& config);
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class PoolingToken { Bos, Eos };

/// Encoder reads bos; Decoder and EncoderDecoder read eos.
constexpr PoolingToken pooling_token(ModelFamily family) {
  return family == ModelFamily::Encoder ? PoolingToken::Bos : PoolingToken::Eos;
}

/// Position whose hidden state reaches the head. Throws DataError when the
/// required special token is not where the layout puts it.
std::size_t pooling_position(ModelFamily family, const EncodedSequence& seq);

struct ParamSpec {
  enum class Init { Normal, Zeros, Ones };
  std::string name;
  std::vector<std::size_t> shape;
  Init init = Init::Normal;

  std::size_t count() const;
};

std::vector<ParamSpec> backbone_layout(const ModelConfig& config);
std::vector<ParamSpec> mtr_head_layout(const ModelConfig& config);
std::vector<ParamSpec> ft_head_layout(std::size_t hidden_size, std::size_t head_hidden);

/// Scalar parameter count of backbone + regression head, from the layout
/// alone (nothing is allocated).
std::size_t param_count(const ModelConfig& config);

/// Ordered, name-addressable parameters. Initialization is per-name seeded
/// (truncated normal, std 0.02), so it does not depend on layout order.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const std::vector<ParamSpec>& layout, std::uint64_t seed);

  ad::Parameter& get(std::string_view name);
  const ad::Parameter& get(std::string_view name) const;
  std::span<ad::Parameter> all() { return params_; }
  std::span<const ad::Parameter> all() const { return params_; }
  std::size_t scalar_count() const;
  void set_trainable(bool trainable);
  void zero_grad();

  /// FNV-1a over names, shapes and the raw value bits.
  std::uint64_t checksum() const;
  std::vector<NamedTensor> export_tensors() const;
  /// Copies values by name; every parameter must be present with its shape.
  void import_tensors(const std::vector<NamedTensor>& tensors);

 private:
  std::vector<ad::Parameter> params_;
};

struct ForwardOptions {
  /// Run on the content prefix only. Pad positions never influence content
  /// positions under any mask, so this is exact; false runs the padded
  /// length with the attention mask applied.
  bool crop_padding = true;
  /// When set, receives the sequence position that was pooled.
  std::vector<std::size_t>* pooled_positions = nullptr;
};

/// Transformer stack for one family:
///  Encoder        post-LN blocks, learned positions, GELU FFN, bidirectional
///  Decoder        pre-RMSNorm blocks, rotary positions, SwiGLU MLP, causal
///  EncoderDecoder post-LN encoder + causal decoder with cross-attention,
///                 the decoder reading the same ids as the encoder
class Backbone {
 public:
  Backbone() = default;
  Backbone(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Final hidden states [L x d] (decoder stack for EncoderDecoder).
  ad::Var hidden_states(ad::Tape& tape, const EncodedSequence& seq, const ForwardOptions& opts = {});
  /// Hidden state at the family's pooling position, [1 x d].
  ad::Var pooled(ad::Tape& tape, const EncodedSequence& seq, const ForwardOptions& opts = {});
  /// Pooled values for a batch as [B x d], without retaining a tape.
  ad::Tensor pooled_features(std::span<const EncodedSequence> batch);

 private:
  ModelConfig config_;
  ParameterSet params_;
};

/// Backbone + linear regression head hidden -> num_properties.
class MtrModel {
 public:
  MtrModel() = default;
  MtrModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return backbone_.config(); }
  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  ParameterSet& head() { return head_; }
  const ParameterSet& head() const { return head_; }

  /// Predictions [B x P] read at each sequence's pooling position.
  ad::Var forward(ad::Tape& tape, std::span<const EncodedSequence* const> batch, const ForwardOptions& opts = {});
  std::size_t param_count() const { return backbone_.params().scalar_count() + head_.scalar_count(); }
  void zero_grad();

  Checkpoint to_checkpoint() const;
  static MtrModel from_checkpoint(const Checkpoint& ckpt);

 private:
  Backbone backbone_;
  ParameterSet head_;
};

/// Two-layer GELU head: hidden -> head_hidden -> 1.
class FtHead {
 public:
  FtHead() = default;
  FtHead(std::size_t hidden_size, std::size_t head_hidden, std::uint64_t seed);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  ad::Var forward(ad::Tape& tape, ad::Var features);
  /// Head applied to features [B x d] without retaining a tape.
  ad::Tensor apply(const ad::Tensor& features);

 private:
  ParameterSet params_;
};

/// Frozen backbone + trainable FtHead.
class FtModel {
 public:
  FtModel(Backbone backbone, FtHead head);

  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  FtHead& head() { return head_; }
  const FtHead& head() const { return head_; }

  /// Outputs [B x 1]: logits for classification, values for regression.
  ad::Var forward(ad::Tape& tape, std::span<const EncodedSequence* const> batch, const ForwardOptions& opts = {});

 private:
  Backbone backbone_;
  FtHead head_;
};

/// Copies the backbone, marks it frozen and attaches a fresh head.
/// head_hidden = 0 selects hidden_size.
FtModel freeze_backbone(const MtrModel& mtr, std::uint64_t head_seed, std::size_t head_hidden = 0);

}  // namespace molbench
