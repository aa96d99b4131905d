// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "molbench/error.hpp"

namespace molbench {

enum class ModelFamily { Encoder, Decoder, EncoderDecoder };

std::string_view family_name(ModelFamily family);
/// Accepts "Encoder"/"Decoder"/"EncoderDecoder" and the report names
/// "ChemBERTa"/"ChemLLaMA"/"ChemBART".
ModelFamily parse_family(std::string_view text);
/// Report label used in registries and tables.
std::string_view family_report_name(ModelFamily family);

using Token = std::string;

class TokenizeError : public DataError {
 public:
  TokenizeError(const std::string& what, std::size_t offset)
      : DataError(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Splits a SMILES string into atom-level tokens. Bracket atoms, Cl, Br,
/// %NN ring bonds and @@ are single tokens; everything else is one char.
/// Throws TokenizeError on an unterminated bracket.
std::vector<Token> tokenize(std::string_view smiles);

// Special ids are fixed: ids 0-4 hold the reserved markers in this order.
inline constexpr std::int32_t kBosId = 0;
inline constexpr std::int32_t kPadId = 1;
inline constexpr std::int32_t kEosId = 2;
inline constexpr std::int32_t kUnkId = 3;
inline constexpr std::int32_t kMaskId = 4;
inline constexpr std::size_t kNumSpecials = 5;
inline constexpr std::size_t kMaxSequenceLength = 512;

inline constexpr std::string_view kBosToken = "<s>";
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kMaskToken = "<mask>";

class Vocabulary {
 public:
  /// Builds from a full id-ordered token list; the first five entries must
  /// be the reserved markers.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::int32_t id_of(std::string_view token) const;  // unk_id when absent
  bool contains(std::string_view token) const;
  const std::string& token_of(std::int32_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::int32_t pad_id() const { return kPadId; }
  std::int32_t bos_id() const { return kBosId; }
  std::int32_t eos_id() const { return kEosId; }
  std::int32_t unk_id() const { return kUnkId; }
  std::int32_t mask_id() const { return kMaskId; }
  static bool is_special(std::int32_t id) {
    return id >= 0 && static_cast<std::size_t>(id) < kNumSpecials;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

  /// One token per line, line number = id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Specials first, then the distinct corpus tokens in byte-lexicographic
/// order. Throws DataError on an empty corpus.
Vocabulary build_vocab(const std::vector<std::string>& corpus);

struct EncodedSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> attention_mask;
  std::size_t content_length = 0;  // non-pad positions, bos/eos included
};

/// Lays out [bos, tokens..., eos, pad...] padded to max_len. The Decoder
/// family uses the same layout, which guarantees an eos before any pad.
/// Over-long content is truncated so the terminal eos survives.
EncodedSequence encode(std::string_view smiles, ModelFamily family,
                       std::size_t max_len, const Vocabulary& vocab);

/// Strips the reserved markers and concatenates the rest.
std::string decode(const EncodedSequence& seq, const Vocabulary& vocab);

/// Reads one SMILES per line, skipping blank lines and trailing CR.
std::vector<std::string> read_smiles_file(const std::filesystem::path& path);

}  // namespace molbench
