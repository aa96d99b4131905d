// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "molbench/error.hpp"
#include "molbench/tokenizer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace molbench;

namespace {

std::vector<std::string> corpus() { return read_smiles_file(test::data_path("tokenizer_corpus.smi")); }

}  // namespace

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("CCO"), (std::vector<std::string>{"C", "C", "O"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("[C@@H](Cl)Br"), (std::vector<std::string>{"[C@@H]", "(", "Cl", ")", "Br"}));
  EXPECT_EQ(tokenize("C%12CC%12"), (std::vector<std::string>{"C", "%12", "C", "C", "%12"}));
}

TEST(Tokenize, MatchesRegexOracleOnCorpus) {
  const auto smiles = corpus();
  ASSERT_EQ(smiles.size(), 500u);
  for (const auto& s : smiles) EXPECT_EQ(tokenize(s), test::regex_tokens(s)) << s;
}

TEST(Tokenize, ConcatenationReproducesInput) {
  for (const auto& s : corpus()) {
    std::string joined;
    for (const auto& t : tokenize(s)) {
      EXPECT_FALSE(t.empty());
      joined += t;
    }
    EXPECT_EQ(joined, s);
  }
}

TEST(Tokenize, UnclosedBracketReportsOffset) {
  try {
    tokenize("CC[NH3+");
    FAIL() << "expected TokenizeError";
  } catch (const TokenizeError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
}

TEST(Vocab, CountsAndDeterminism) {
  EXPECT_EQ(build_vocab({"CCO"}).size(), 7u);
  EXPECT_EQ(build_vocab({"CCO", "CCO"}), build_vocab({"CCO"}));
  EXPECT_EQ(build_vocab({"C", "N"}), build_vocab({"N", "C"}));
  EXPECT_THROW(build_vocab({}), DataError);
}

TEST(Vocab, SpecialsFirstThenSorted) {
  const auto v = build_vocab({"OCN", "Cl"});
  const std::vector<std::string> expect{"<s>", "<pad>", "</s>", "<unk>", "<mask>", "C", "Cl", "N", "O"};
  EXPECT_EQ(v.tokens(), expect);
  EXPECT_EQ(v.id_of("Br"), v.unk_id());
  EXPECT_THROW(v.token_of(99), DataError);
}

TEST(Vocab, SaveLoadRoundTrip) {
  const auto dir = test::scratch_dir("vocab");
  const auto v = build_vocab(corpus());
  v.save(dir / "vocab.txt");
  EXPECT_EQ(Vocabulary::load(dir / "vocab.txt"), v);
}

TEST(Encode, EncoderLayout) {
  const auto v = build_vocab({"CCO"});
  const auto seq = encode("CCO", ModelFamily::Encoder, 8, v);
  const std::int32_t c = v.id_of("C"), o = v.id_of("O");
  EXPECT_EQ(seq.ids, (std::vector<std::int32_t>{kBosId, c, c, o, kEosId, kPadId, kPadId, kPadId}));
  EXPECT_EQ(seq.attention_mask, (std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0, 0, 0}));
  EXPECT_EQ(seq.content_length, 5u);
}

TEST(Encode, EmptyContent) {
  const auto v = build_vocab({"C"});
  const auto seq = encode("", ModelFamily::Encoder, 4, v);
  EXPECT_EQ(seq.ids, (std::vector<std::int32_t>{kBosId, kEosId, kPadId, kPadId}));
}

TEST(Encode, TruncationKeepsEos) {
  const auto v = build_vocab({"C"});
  const auto seq = encode("CCCCCCCC", ModelFamily::Decoder, 5, v);
  EXPECT_EQ(seq.ids.size(), 5u);
  EXPECT_EQ(seq.ids.back(), kEosId);
  EXPECT_EQ(seq.content_length, 5u);
  EXPECT_THROW(encode("C", ModelFamily::Encoder, 2, v), std::invalid_argument);
  EXPECT_THROW(encode("C", ModelFamily::Encoder, 513, v), std::invalid_argument);
}

TEST(Encode, RoundTripAndMaskInvariantsAllFamilies) {
  const auto smiles = corpus();
  const auto v = build_vocab(smiles);
  for (auto fam : {ModelFamily::Encoder, ModelFamily::Decoder, ModelFamily::EncoderDecoder}) {
    for (const auto& s : smiles) {
      const auto seq = encode(s, fam, kMaxSequenceLength, v);
      EXPECT_EQ(decode(seq, v), s);
      ASSERT_EQ(seq.ids.size(), seq.attention_mask.size());
      bool seen_pad = false, eos_before_pad = false;
      for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        EXPECT_EQ(seq.attention_mask[i] == 1, seq.ids[i] != kPadId);
        if (seq.ids[i] == kEosId && !seen_pad) eos_before_pad = true;
        if (seq.ids[i] == kPadId) seen_pad = true;
        else EXPECT_FALSE(seen_pad) << "content after pad in " << s;
      }
      EXPECT_TRUE(eos_before_pad);
    }
  }
}

TEST(Decode, Examples) {
  const auto v = build_vocab({"[C@@H](Cl)Br"});
  EXPECT_EQ(decode(encode("[C@@H](Cl)Br", ModelFamily::Decoder, 16, v), v), "[C@@H](Cl)Br");
  EncodedSequence bare{{kBosId, kEosId}, {1, 1}, 2};
  EXPECT_EQ(decode(bare, v), "");
  EncodedSequence bad{{kBosId, 1000, kEosId}, {1, 1, 1}, 3};
  EXPECT_THROW(decode(bad, v), DataError);
}
