// SPDX-License-Identifier: Apache-2.0
#include "molbench/model.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include "molbench/error.hpp"
#include "molbench/rng.hpp"

namespace molbench {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void validate(const ModelConfig& c) {
  auto fail = [](const std::string& msg) { throw UsageError("invalid model config: " + msg); };
  if (c.hidden_size == 0 || c.intermediate_size == 0 || c.num_layers == 0 || c.num_heads == 0 ||
      c.vocab_size == 0 || c.num_properties == 0) {
    fail("all sizes must be positive");
  }
  if (c.hidden_size % c.num_heads != 0) {
    fail("hidden_size " + std::to_string(c.hidden_size) + " not divisible by num_heads " +
         std::to_string(c.num_heads));
  }
  if (c.family == ModelFamily::Decoder && (c.hidden_size / c.num_heads) % 2 != 0) {
    fail("rotary positions need an even head dimension");
  }
  if (c.max_positions != kMaxSequenceLength) fail("max_positions must be 512");
  if (c.vocab_size < kNumSpecials) fail("vocab_size smaller than the special-token block");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"family", family_name(c.family)},
          {"hidden_size", c.hidden_size},
          {"intermediate_size", c.intermediate_size},
          {"num_layers", c.num_layers},
          {"num_heads", c.num_heads},
          {"vocab_size", c.vocab_size},
          {"max_positions", c.max_positions},
          {"num_properties", c.num_properties}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.family = parse_family(j.at("family").get<std::string>());
  c.hidden_size = j.at("hidden_size").get<std::size_t>();
  c.intermediate_size = j.at("intermediate_size").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_positions = j.value("max_positions", kMaxSequenceLength);
  c.num_properties = j.at("num_properties").get<std::size_t>();
  validate(c);
  return c;
}

std::size_t pooling_position(ModelFamily family, const EncodedSequence& seq) {
  if (seq.content_length == 0 || seq.content_length > seq.ids.size()) {
    throw DataError("sequence has no content region");
  }
  if (pooling_token(family) == PoolingToken::Bos) {
    if (seq.ids[0] != kBosId) throw DataError("sequence lacks the bos token required for pooling");
    return 0;
  }
  const std::size_t pos = seq.content_length - 1;
  if (seq.ids[pos] != kEosId) throw DataError("sequence lacks the eos token required for pooling");
  return pos;
}

std::size_t ParamSpec::count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

using Init = ParamSpec::Init;

void add_linear(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t in, std::size_t outw,
                bool bias = true) {
  out.push_back({prefix + ".weight", {in, outw}, Init::Normal});
  if (bias) out.push_back({prefix + ".bias", {outw}, Init::Zeros});
}

void add_layer_norm(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
  out.push_back({prefix + ".weight", {d}, Init::Ones});
  out.push_back({prefix + ".bias", {d}, Init::Zeros});
}

void add_attention(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d, bool bias) {
  for (const char* proj : {"q", "k", "v", "o"}) add_linear(out, prefix + "." + proj, d, d, bias);
}

void add_post_ln_encoder_layer(std::vector<ParamSpec>& out, const std::string& p, const ModelConfig& c) {
  add_attention(out, p + ".attn", c.hidden_size, true);
  add_layer_norm(out, p + ".attn_norm", c.hidden_size);
  add_linear(out, p + ".ffn.up", c.hidden_size, c.intermediate_size);
  add_linear(out, p + ".ffn.down", c.intermediate_size, c.hidden_size);
  add_layer_norm(out, p + ".ffn_norm", c.hidden_size);
}

}  // namespace

std::vector<ParamSpec> backbone_layout(const ModelConfig& c) {
  validate(c);
  const std::size_t d = c.hidden_size;
  std::vector<ParamSpec> out;
  out.push_back({"embed.tokens", {c.vocab_size, d}, Init::Normal});
  switch (c.family) {
    case ModelFamily::Encoder:
      out.push_back({"embed.positions", {c.max_positions, d}, Init::Normal});
      add_layer_norm(out, "embed.norm", d);
      for (std::size_t i = 0; i < c.num_layers; ++i) {
        add_post_ln_encoder_layer(out, "layers." + std::to_string(i), c);
      }
      break;
    case ModelFamily::Decoder:
      for (std::size_t i = 0; i < c.num_layers; ++i) {
        const std::string p = "layers." + std::to_string(i);
        out.push_back({p + ".attn_norm.weight", {d}, Init::Ones});
        add_attention(out, p + ".attn", d, false);
        out.push_back({p + ".mlp_norm.weight", {d}, Init::Ones});
        add_linear(out, p + ".mlp.gate", d, c.intermediate_size, false);
        add_linear(out, p + ".mlp.up", d, c.intermediate_size, false);
        add_linear(out, p + ".mlp.down", c.intermediate_size, d, false);
      }
      out.push_back({"final_norm.weight", {d}, Init::Ones});
      break;
    case ModelFamily::EncoderDecoder:
      out.push_back({"encoder.positions", {c.max_positions, d}, Init::Normal});
      add_layer_norm(out, "encoder.embed_norm", d);
      out.push_back({"decoder.positions", {c.max_positions, d}, Init::Normal});
      add_layer_norm(out, "decoder.embed_norm", d);
      for (std::size_t i = 0; i < c.num_layers; ++i) {
        add_post_ln_encoder_layer(out, "encoder.layers." + std::to_string(i), c);
      }
      for (std::size_t i = 0; i < c.num_layers; ++i) {
        const std::string p = "decoder.layers." + std::to_string(i);
        add_attention(out, p + ".self_attn", d, true);
        add_layer_norm(out, p + ".self_attn_norm", d);
        add_attention(out, p + ".cross_attn", d, true);
        add_layer_norm(out, p + ".cross_attn_norm", d);
        add_linear(out, p + ".ffn.up", d, c.intermediate_size);
        add_linear(out, p + ".ffn.down", c.intermediate_size, d);
        add_layer_norm(out, p + ".ffn_norm", d);
      }
      break;
  }
  return out;
}

std::vector<ParamSpec> mtr_head_layout(const ModelConfig& c) {
  std::vector<ParamSpec> out;
  add_linear(out, "head", c.hidden_size, c.num_properties);
  return out;
}

std::vector<ParamSpec> ft_head_layout(std::size_t hidden, std::size_t head_hidden) {
  std::vector<ParamSpec> out;
  add_linear(out, "ft.dense", hidden, head_hidden);
  add_linear(out, "ft.out", head_hidden, 1);
  return out;
}

std::size_t param_count(const ModelConfig& c) {
  std::size_t n = 0;
  for (const auto& s : backbone_layout(c)) n += s.count();
  for (const auto& s : mtr_head_layout(c)) n += s.count();
  return n;
}

ParameterSet::ParameterSet(const std::vector<ParamSpec>& layout, std::uint64_t seed) {
  params_.reserve(layout.size());
  for (const auto& spec : layout) {
    ad::Parameter p(spec.name, Tensor(spec.shape, 0.0));
    switch (spec.init) {
      case Init::Zeros: break;
      case Init::Ones: p.value.fill(1.0); break;
      case Init::Normal: {
        Rng rng(derive_seed(seed, spec.name));
        for (auto& v : p.value.values()) v = rng.truncated_normal(0.02);
        break;
      }
    }
    params_.push_back(std::move(p));
  }
}

ad::Parameter& ParameterSet::get(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

const ad::Parameter& ParameterSet::get(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::set_trainable(bool trainable) {
  for (auto& p : params_) {
    p.trainable = trainable;
    p.zero_grad();
  }
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& p : params_) {
    for (const char c : p.name) feed(static_cast<unsigned char>(c));
    for (const auto e : p.value.shape()) feed(e);
    for (const double v : p.value.values()) feed(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

std::vector<NamedTensor> ParameterSet::export_tensors() const {
  std::vector<NamedTensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back({p.name, p.value});
  return out;
}

void ParameterSet::import_tensors(const std::vector<NamedTensor>& tensors) {
  for (auto& p : params_) {
    const auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == p.name; });
    if (it == tensors.end()) throw DataError("checkpoint is missing parameter '" + p.name + "'");
    if (!it->value.same_shape(p.value)) {
      throw DataError("parameter '" + p.name + "' has shape " + it->value.shape_string() + " in checkpoint, expected " +
                      p.value.shape_string());
    }
    p.value = it->value;
  }
}

namespace {

// Forward helpers bound to one ParameterSet and tape.
struct Builder {
  Tape& tape;
  ParameterSet& params;

  Var p(const std::string& name) { return tape.parameter(params.get(name)); }

  Var lin(Var x, const std::string& prefix, bool bias = true) {
    return bias ? ad::linear(x, p(prefix + ".weight"), p(prefix + ".bias")) : ad::linear(x, p(prefix + ".weight"));
  }
  Var ln(Var x, const std::string& prefix) { return ad::layer_norm(x, p(prefix + ".weight"), p(prefix + ".bias")); }

  Var mha(Var query_in, Var kv_in, const std::string& prefix, std::size_t heads, ad::AttentionMode mode,
          std::span<const std::uint8_t> key_mask, bool bias) {
    Var q = lin(query_in, prefix + ".q", bias);
    Var k = lin(kv_in, prefix + ".k", bias);
    Var v = lin(kv_in, prefix + ".v", bias);
    return lin(ad::attention(q, k, v, heads, mode, key_mask), prefix + ".o", bias);
  }

  Var embed(std::span<const std::int32_t> ids, const std::string& positions, const std::string& norm) {
    std::vector<std::int32_t> pos(ids.size());
    std::iota(pos.begin(), pos.end(), 0);
    Var x = ad::add(ad::embedding(p("embed.tokens"), ids), ad::embedding(p(positions), pos));
    return ln(x, norm);
  }

  Var post_ln_encoder_layer(Var x, const std::string& prefix, std::size_t heads,
                            std::span<const std::uint8_t> key_mask) {
    Var a = mha(x, x, prefix + ".attn", heads, ad::AttentionMode::Bidirectional, key_mask, true);
    x = ln(ad::add(x, a), prefix + ".attn_norm");
    Var f = lin(ad::gelu(lin(x, prefix + ".ffn.up")), prefix + ".ffn.down");
    return ln(ad::add(x, f), prefix + ".ffn_norm");
  }
};

}  // namespace

Backbone::Backbone(const ModelConfig& config, std::uint64_t seed)
    : config_(config), params_(backbone_layout(config), derive_seed(seed, "backbone")) {}

Var Backbone::hidden_states(Tape& tape, const EncodedSequence& seq, const ForwardOptions& opts) {
  if (seq.ids.size() != seq.attention_mask.size() || seq.content_length == 0 ||
      seq.content_length > seq.ids.size()) {
    throw DataError("malformed encoded sequence");
  }
  const std::size_t len = opts.crop_padding ? seq.content_length : seq.ids.size();
  if (len > config_.max_positions) throw DataError("sequence longer than max_positions");
  const std::span<const std::int32_t> ids(seq.ids.data(), len);
  std::span<const std::uint8_t> mask;
  if (!opts.crop_padding) mask = std::span<const std::uint8_t>(seq.attention_mask.data(), len);

  Builder b{tape, params_};
  const std::size_t heads = config_.num_heads;
  switch (config_.family) {
    case ModelFamily::Encoder: {
      Var x = b.embed(ids, "embed.positions", "embed.norm");
      for (std::size_t i = 0; i < config_.num_layers; ++i) {
        x = b.post_ln_encoder_layer(x, "layers." + std::to_string(i), heads, mask);
      }
      return x;
    }
    case ModelFamily::Decoder: {
      Var x = ad::embedding(b.p("embed.tokens"), ids);
      for (std::size_t i = 0; i < config_.num_layers; ++i) {
        const std::string p = "layers." + std::to_string(i);
        Var h = ad::rms_norm(x, b.p(p + ".attn_norm.weight"));
        Var q = ad::rotary(b.lin(h, p + ".attn.q", false), heads);
        Var k = ad::rotary(b.lin(h, p + ".attn.k", false), heads);
        Var v = b.lin(h, p + ".attn.v", false);
        Var a = b.lin(ad::attention(q, k, v, heads, ad::AttentionMode::Causal, mask), p + ".attn.o", false);
        x = ad::add(x, a);
        h = ad::rms_norm(x, b.p(p + ".mlp_norm.weight"));
        Var gated = ad::mul(ad::silu(b.lin(h, p + ".mlp.gate", false)), b.lin(h, p + ".mlp.up", false));
        x = ad::add(x, b.lin(gated, p + ".mlp.down", false));
      }
      return ad::rms_norm(x, b.p("final_norm.weight"));
    }
    case ModelFamily::EncoderDecoder: {
      Var enc = b.embed(ids, "encoder.positions", "encoder.embed_norm");
      for (std::size_t i = 0; i < config_.num_layers; ++i) {
        enc = b.post_ln_encoder_layer(enc, "encoder.layers." + std::to_string(i), heads, mask);
      }
      Var x = b.embed(ids, "decoder.positions", "decoder.embed_norm");
      for (std::size_t i = 0; i < config_.num_layers; ++i) {
        const std::string p = "decoder.layers." + std::to_string(i);
        Var a = b.mha(x, x, p + ".self_attn", heads, ad::AttentionMode::Causal, mask, true);
        x = b.ln(ad::add(x, a), p + ".self_attn_norm");
        Var c = b.mha(x, enc, p + ".cross_attn", heads, ad::AttentionMode::Cross, mask, true);
        x = b.ln(ad::add(x, c), p + ".cross_attn_norm");
        Var f = b.lin(ad::gelu(b.lin(x, p + ".ffn.up")), p + ".ffn.down");
        x = b.ln(ad::add(x, f), p + ".ffn_norm");
      }
      return x;
    }
  }
  throw std::logic_error("unreachable model family");
}

Var Backbone::pooled(Tape& tape, const EncodedSequence& seq, const ForwardOptions& opts) {
  const std::size_t pos = pooling_position(config_.family, seq);
  if (opts.pooled_positions) opts.pooled_positions->push_back(pos);
  Var h = hidden_states(tape, seq, opts);
  const std::size_t rows[] = {pos};
  return ad::select_rows(h, rows);
}

Tensor Backbone::pooled_features(std::span<const EncodedSequence> batch) {
  Tensor out = Tensor::matrix(batch.size(), config_.hidden_size);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tape tape;
    const Var v = pooled(tape, batch[i]);
    const auto src = v.value().values();
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

MtrModel::MtrModel(const ModelConfig& config, std::uint64_t seed)
    : backbone_(config, seed), head_(mtr_head_layout(config), derive_seed(seed, "mtr-head")) {}

Var MtrModel::forward(Tape& tape, std::span<const EncodedSequence* const> batch, const ForwardOptions& opts) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  std::vector<Var> rows;
  rows.reserve(batch.size());
  for (const auto* seq : batch) rows.push_back(backbone_.pooled(tape, *seq, opts));
  Var pooled = rows.size() == 1 ? rows[0] : ad::concat_rows(rows);
  return ad::linear(pooled, tape.parameter(head_.get("head.weight")), tape.parameter(head_.get("head.bias")));
}

void MtrModel::zero_grad() {
  backbone_.params().zero_grad();
  head_.zero_grad();
}

Checkpoint MtrModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = to_json(config());
  ckpt.tensors = backbone_.params().export_tensors();
  auto head = head_.export_tensors();
  ckpt.tensors.insert(ckpt.tensors.end(), head.begin(), head.end());
  return ckpt;
}

MtrModel MtrModel::from_checkpoint(const Checkpoint& ckpt) {
  MtrModel m(model_config_from_json(ckpt.config), 0);
  m.backbone_.params().import_tensors(ckpt.tensors);
  m.head_.import_tensors(ckpt.tensors);
  return m;
}

FtHead::FtHead(std::size_t hidden, std::size_t head_hidden, std::uint64_t seed)
    : params_(ft_head_layout(hidden, head_hidden), derive_seed(seed, "ft-head")) {}

Var FtHead::forward(Tape& tape, Var features) {
  Builder b{tape, params_};
  return b.lin(ad::gelu(b.lin(features, "ft.dense")), "ft.out");
}

Tensor FtHead::apply(const Tensor& features) {
  Tape tape;
  return forward(tape, tape.constant(features)).value();
}

FtModel::FtModel(Backbone backbone, FtHead head) : backbone_(std::move(backbone)), head_(std::move(head)) {
  backbone_.params().set_trainable(false);
}

Var FtModel::forward(Tape& tape, std::span<const EncodedSequence* const> batch, const ForwardOptions& opts) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  std::vector<Var> rows;
  rows.reserve(batch.size());
  for (const auto* seq : batch) rows.push_back(backbone_.pooled(tape, *seq, opts));
  return head_.forward(tape, rows.size() == 1 ? rows[0] : ad::concat_rows(rows));
}

FtModel freeze_backbone(const MtrModel& mtr, std::uint64_t head_seed, std::size_t head_hidden) {
  const std::size_t d = mtr.config().hidden_size;
  return FtModel(mtr.backbone(), FtHead(d, head_hidden == 0 ? d : head_hidden, head_seed));
}

}  // namespace molbench
