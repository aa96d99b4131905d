// SPDX-License-Identifier: Apache-2.0
#include "molbench/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

namespace molbench {

std::string_view family_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::Encoder: return "Encoder";
    case ModelFamily::Decoder: return "Decoder";
    case ModelFamily::EncoderDecoder: return "EncoderDecoder";
  }
  return "?";
}

std::string_view family_report_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::Encoder: return "ChemBERTa";
    case ModelFamily::Decoder: return "ChemLLaMA";
    case ModelFamily::EncoderDecoder: return "ChemBART";
  }
  return "?";
}

ModelFamily parse_family(std::string_view text) {
  if (text == "Encoder" || text == "ChemBERTa") return ModelFamily::Encoder;
  if (text == "Decoder" || text == "ChemLLaMA") return ModelFamily::Decoder;
  if (text == "EncoderDecoder" || text == "ChemBART") return ModelFamily::EncoderDecoder;
  throw DataError("unknown model family '" + std::string(text) + "'");
}

std::vector<Token> tokenize(std::string_view smiles) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = smiles.size();
  while (i < n) {
    const char c = smiles[i];
    std::size_t len = 1;
    if (c == '[') {
      const auto close = smiles.find(']', i + 1);
      if (close == std::string_view::npos) {
        throw TokenizeError("unterminated bracket atom starting at offset " + std::to_string(i), i);
      }
      len = close - i + 1;
    } else if (i + 1 < n) {
      const char d = smiles[i + 1];
      if ((c == 'C' && d == 'l') || (c == 'B' && d == 'r') || (c == '@' && d == '@')) {
        len = 2;
      } else if (c == '%' && i + 2 < n && std::isdigit(static_cast<unsigned char>(d)) &&
                 std::isdigit(static_cast<unsigned char>(smiles[i + 2]))) {
        len = 3;
      }
    }
    tokens.emplace_back(smiles.substr(i, len));
    i += len;
  }
  return tokens;
}

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials = {
      std::string(kBosToken), std::string(kPadToken), std::string(kEosToken),
      std::string(kUnkToken), std::string(kMaskToken)};
  return specials;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& specials = special_tokens();
  if (tokens_.size() < kNumSpecials ||
      !std::equal(specials.begin(), specials.end(), tokens_.begin())) {
    throw DataError("vocabulary must start with <s>, <pad>, </s>, <unk>, <mask>");
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw DataError("vocabulary line " + std::to_string(i) + " is empty");
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::int32_t Vocabulary::id_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

const std::string& Vocabulary::token_of(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::set<std::string> distinct;
  for (const auto& s : corpus) {
    for (auto& t : tokenize(s)) distinct.insert(std::move(t));
  }
  std::vector<std::string> tokens = special_tokens();
  tokens.insert(tokens.end(), distinct.begin(), distinct.end());
  return Vocabulary(std::move(tokens));
}

EncodedSequence encode(std::string_view smiles, ModelFamily /*family*/, std::size_t max_len,
                       const Vocabulary& vocab) {
  if (max_len < 3 || max_len > kMaxSequenceLength) {
    throw std::invalid_argument("encode: max_len must lie in [3, 512], got " +
                                std::to_string(max_len));
  }
  const auto tokens = tokenize(smiles);
  const std::size_t kept = std::min(tokens.size(), max_len - 2);

  EncodedSequence seq;
  seq.ids.reserve(max_len);
  seq.ids.push_back(vocab.bos_id());
  for (std::size_t i = 0; i < kept; ++i) seq.ids.push_back(vocab.id_of(tokens[i]));
  seq.ids.push_back(vocab.eos_id());
  seq.content_length = seq.ids.size();
  seq.ids.resize(max_len, vocab.pad_id());
  seq.attention_mask.assign(max_len, 0);
  std::fill_n(seq.attention_mask.begin(), seq.content_length, std::uint8_t{1});
  return seq;
}

std::string decode(const EncodedSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (const auto id : seq.ids) {
    const auto& tok = vocab.token_of(id);
    if (!Vocabulary::is_special(id)) out += tok;
  }
  return out;
}

std::vector<std::string> read_smiles_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read SMILES file " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace molbench
