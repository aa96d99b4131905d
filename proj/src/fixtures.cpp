// SPDX-License-Identifier: Apache-2.0
#include "molbench/fixtures.hpp"

#include <array>
#include <string_view>

#include "molbench/rng.hpp"

namespace molbench {

namespace {

constexpr std::array<std::string_view, 14> kChain = {
    "C", "C", "CC", "N", "O", "C(=O)", "C(C)", "c1ccccc1", "C1CCCCC1", "c1ccncc1",
    "S(=O)(=O)", "[C@@H](O)", "[C@H](N)", "C=C",
};
constexpr std::array<std::string_view, 10> kBranch = {
    "C", "O", "F", "Cl", "Br", "N", "C#N", "OC", "[O-]", "C(F)(F)F",
};
constexpr std::array<std::string_view, 6> kCaps = {
    "C", "O", "N", "[NH3+]", "c1ccc(Cl)cc1", "C%12CCCCC%12",
};

std::string_view pick(Rng& rng, std::span<const std::string_view> from) {
  return from[static_cast<std::size_t>(rng.below(from.size()))];
}

}  // namespace

std::vector<std::string> synthetic_smiles(std::size_t count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "synthetic-smiles"));
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string s(pick(rng, kCaps));
    const std::size_t pieces = 1 + static_cast<std::size_t>(rng.below(6));
    for (std::size_t p = 0; p < pieces; ++p) {
      s += pick(rng, kChain);
      if (rng.below(3) == 0) {
        s += '(';
        s += pick(rng, kBranch);
        s += ')';
      }
    }
    if (rng.below(2) == 0) s += pick(rng, kBranch);
    out.push_back(std::move(s));
  }
  return out;
}

const std::vector<std::string>& reference_smiles() {
  static const std::vector<std::string> mols = {
      "CCO",
      "CC(=O)Oc1ccccc1C(=O)O",
      "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
      "CC(C)Cc1ccc(cc1)[C@@H](C)C(=O)O",
      "C[C@H](N)C(=O)O",
      "N[C@@H](Cc1ccccc1)C(=O)O",
      "c1ccc2ccccc2c1",
      "O=C([O-])c1ccccc1",
      "[NH4+]",
      "C1CC2CCC1C2",
      "C%10CCCCC%10",
      "c1cc2ccc3cccc4ccc(c1)c2c34",
      "ClC(Cl)(Cl)Cl",
      "BrCCBr",
      "FC(F)(F)c1ccc(O)cc1",
      "CC(C)(C)OC(=O)N1CCC(CC1)C(=O)O",
      "OC[C@H]1OC(O)[C@H](O)[C@@H](O)[C@@H]1O",
      "CCN(CC)CC",
      "C#CCO",
      "N#Cc1ccccc1",
      "O=S(=O)(N)c1ccc(N)cc1",
      "CC(=O)Nc1ccc(O)cc1",
      "C/C=C/C",
      "F/C=C\\F",
      "[2H]C([2H])([2H])O",
      "[Na+].[Cl-]",
      "c1ccc(cc1)-c1ccccc1",
      "CCCCCCCCCCCCCCCC(=O)O",
      "O=C1CCCN1",
      "C1=CC=CC=C1",
      "n1ccccc1",
      "c1cc[nH]c1",
      "OP(=O)(O)O",
      "CSC",
      "[Fe+2]",
      "C12C3C4C1C5C2C3C45",
  };
  return mols;
}

}  // namespace molbench
